#include "chainlens/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chainlens::kernels {

namespace {

double block_partial_sum(const double* v, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
}

double merge_blocks(const std::vector<double>& partials) {
    double s = 0.0;
    for (double p : partials) s += p;
    return s;
}

std::uint32_t nearest_centroid(const double* pt, const double* centroids, std::size_t k,
                               std::size_t cols, double* dist_out) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_k = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double* ctr = centroids + c * cols;
        double d = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double diff = pt[j] - ctr[j];
            d += diff * diff;
        }
        if (d < best) {
            best = d;
            best_k = static_cast<std::uint32_t>(c);
        }
    }
    *dist_out = best;
    return best_k;
}

double row_min_unit_distance(const double* a_row, const double* b, std::size_t nb,
                             std::size_t cols) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nb; ++j) {
        const double* b_row = b + j * cols;
        double d = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double diff = a_row[c] - b_row[c];
            d += diff * diff;
        }
        d *= 0.5;
        best = std::min(best, d);
    }
    return best;
}

}  // namespace

namespace serial {

double sum(std::span<const double> v) {
    const std::size_t nb = block_count(v.size());
    std::vector<double> partials(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(lo + kBlock, v.size());
        partials[b] = block_partial_sum(v.data(), lo, hi);
    }
    return merge_blocks(partials);
}

void column_moments(const double* data, std::size_t rows, std::size_t cols,
                    double* mean, double* stddev) {
    const std::size_t nb = block_count(rows);
    std::vector<double> partials(nb * cols, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double* p = partials.data() + b * cols;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < cols; ++j) p[j] += data[i * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t b = 0; b < nb; ++b) s += partials[b * cols + j];
        mean[j] = rows ? s / static_cast<double>(rows) : 0.0;
    }
    std::fill(partials.begin(), partials.end(), 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double* p = partials.data() + b * cols;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                const double d = data[i * cols + j] - mean[j];
                p[j] += d * d;
            }
    }
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t b = 0; b < nb; ++b) s += partials[b * cols + j];
        stddev[j] = rows ? std::sqrt(s / static_cast<double>(rows)) : 0.0;
    }
}

double assign_clusters(const double* pts, std::size_t rows, std::size_t cols,
                       const double* centroids, std::size_t k, std::uint32_t* labels) {
    const std::size_t nb = block_count(rows);
    std::vector<double> partials(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            double d;
            labels[i] = nearest_centroid(pts + i * cols, centroids, k, cols, &d);
            acc += d;
        }
        partials[b] = acc;
    }
    return merge_blocks(partials);
}

void accumulate_clusters(const double* pts, std::size_t rows, std::size_t cols,
                         const std::uint32_t* labels, std::size_t k,
                         double* sums, std::uint64_t* counts) {
    const std::size_t nb = block_count(rows);
    std::vector<double> partials(nb * k * cols, 0.0);
    std::vector<std::uint64_t> pcounts(nb * k, 0);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double* p = partials.data() + b * k * cols;
        std::uint64_t* pc = pcounts.data() + b * k;
        for (std::size_t i = lo; i < hi; ++i) {
            const std::uint32_t c = labels[i];
            ++pc[c];
            double* dst = p + c * cols;
            const double* src = pts + i * cols;
            for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
        }
    }
    std::fill(sums, sums + k * cols, 0.0);
    std::fill(counts, counts + k, 0);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t c = 0; c < k; ++c) {
            counts[c] += pcounts[b * k + c];
            const double* src = partials.data() + (b * k + c) * cols;
            for (std::size_t j = 0; j < cols; ++j) sums[c * cols + j] += src[j];
        }
    }
}

void min_unit_distance(const double* a, std::size_t na, const double* b, std::size_t nb,
                       std::size_t cols, double* out_min) {
    for (std::size_t i = 0; i < na; ++i)
        out_min[i] = row_min_unit_distance(a + i * cols, b, nb, cols);
}

}  // namespace serial

namespace par {

double sum(std::span<const double> v) {
    const std::size_t n = v.size();
    const std::size_t nb = block_count(n);
    std::vector<double> partials(nb, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = std::min(lo + kBlock, n);
        partials[static_cast<std::size_t>(b)] = block_partial_sum(v.data(), lo, hi);
    }
    return merge_blocks(partials);
}

void column_moments(const double* data, std::size_t rows, std::size_t cols,
                    double* mean, double* stddev) {
    const std::size_t nb = block_count(rows);
    std::vector<double> partials(nb * cols, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double* p = partials.data() + static_cast<std::size_t>(b) * cols;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < cols; ++j) p[j] += data[i * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t b = 0; b < nb; ++b) s += partials[b * cols + j];
        mean[j] = rows ? s / static_cast<double>(rows) : 0.0;
    }
    std::fill(partials.begin(), partials.end(), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double* p = partials.data() + static_cast<std::size_t>(b) * cols;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                const double d = data[i * cols + j] - mean[j];
                p[j] += d * d;
            }
    }
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t b = 0; b < nb; ++b) s += partials[b * cols + j];
        stddev[j] = rows ? std::sqrt(s / static_cast<double>(rows)) : 0.0;
    }
}

double assign_clusters(const double* pts, std::size_t rows, std::size_t cols,
                       const double* centroids, std::size_t k, std::uint32_t* labels) {
    const std::size_t nb = block_count(rows);
    std::vector<double> partials(nb, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            double d;
            labels[i] = nearest_centroid(pts + i * cols, centroids, k, cols, &d);
            acc += d;
        }
        partials[static_cast<std::size_t>(b)] = acc;
    }
    return merge_blocks(partials);
}

void accumulate_clusters(const double* pts, std::size_t rows, std::size_t cols,
                         const std::uint32_t* labels, std::size_t k,
                         double* sums, std::uint64_t* counts) {
    const std::size_t nb = block_count(rows);
    std::vector<double> partials(nb * k * cols, 0.0);
    std::vector<std::uint64_t> pcounts(nb * k, 0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = std::min(lo + kBlock, rows);
        double* p = partials.data() + static_cast<std::size_t>(b) * k * cols;
        std::uint64_t* pc = pcounts.data() + static_cast<std::size_t>(b) * k;
        for (std::size_t i = lo; i < hi; ++i) {
            const std::uint32_t c = labels[i];
            ++pc[c];
            double* dst = p + c * cols;
            const double* src = pts + i * cols;
            for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
        }
    }
    std::fill(sums, sums + k * cols, 0.0);
    std::fill(counts, counts + k, 0);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t c = 0; c < k; ++c) {
            counts[c] += pcounts[b * k + c];
            const double* src = partials.data() + (b * k + c) * cols;
            for (std::size_t j = 0; j < cols; ++j) sums[c * cols + j] += src[j];
        }
    }
}

void min_unit_distance(const double* a, std::size_t na, const double* b, std::size_t nb,
                       std::size_t cols, double* out_min) {
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(na); ++i)
        out_min[static_cast<std::size_t>(i)] =
            row_min_unit_distance(a + static_cast<std::size_t>(i) * cols, b, nb, cols);
}

}  // namespace par

}  // namespace chainlens::kernels
