#include "chainlens/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "chainlens/kernels.hpp"

namespace chainlens {

ZScoreResult zscore_normalize(const double* values, std::size_t rows, std::size_t cols) {
    if (rows < 2) fail_data("z-score normalization needs at least 2 rows");
    ZScoreResult r;
    r.mean.resize(cols);
    r.stddev.resize(cols);
    r.constant.assign(cols, 0);
    kernels::par::column_moments(values, rows, cols, r.mean.data(), r.stddev.data());
    for (std::size_t c = 0; c < cols; ++c)
        if (r.stddev[c] == 0.0) r.constant[c] = 1;
    r.values.resize(rows * cols);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(rows); ++i)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t idx = static_cast<std::size_t>(i) * cols + c;
            r.values[idx] = r.constant[c] ? 0.0 : (values[idx] - r.mean[c]) / r.stddev[c];
        }
    return r;
}

namespace {

// k-means++ seeding with deterministic prefix-sum selection.
std::vector<double> seed_centroids(const double* values, std::size_t rows, std::size_t cols,
                                   std::uint32_t k, DetRng& rng) {
    std::vector<double> centroids(static_cast<std::size_t>(k) * cols);
    const std::size_t first = static_cast<std::size_t>(rng.next_below(rows));
    std::copy(values + first * cols, values + (first + 1) * cols, centroids.begin());

    std::vector<double> dist2(rows, std::numeric_limits<double>::infinity());
    for (std::uint32_t c = 1; c < k; ++c) {
        const double* last = centroids.data() + static_cast<std::size_t>(c - 1) * cols;
        double total = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            double d = 0.0;
            const double* row = values + i * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                const double diff = row[j] - last[j];
                d += diff * diff;
            }
            dist2[i] = std::min(dist2[i], d);
            total += dist2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.next_double() * total;
            double acc = 0.0;
            pick = rows - 1;
            for (std::size_t i = 0; i < rows; ++i) {
                acc += dist2[i];
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.next_below(rows));
        }
        std::copy(values + pick * cols, values + (pick + 1) * cols,
                  centroids.begin() + static_cast<std::size_t>(c) * cols);
    }
    return centroids;
}

}  // namespace

ClusterAssignment kmeans(const double* values, std::size_t rows, std::size_t cols, std::uint32_t k,
                         std::uint64_t seed) {
    if (k < 1) fail_usage("k must be >= 1");
    if (rows < k)
        fail_data("k-means needs at least k rows (" + std::to_string(rows) + " rows for k=" +
                   std::to_string(k) + "); use a smaller k");

    DetRng rng(seed);
    ClusterAssignment a;
    a.seed = seed;
    a.k = k;
    a.centroids = seed_centroids(values, rows, cols, k, rng);
    a.labels.assign(rows, 0);

    std::vector<double> sums(static_cast<std::size_t>(k) * cols);
    std::vector<std::uint64_t> counts(k);
    constexpr std::uint32_t kMaxIter = 300;
    constexpr double kShiftTol = 1e-6;

    for (std::uint32_t it = 0; it < kMaxIter; ++it) {
        a.iterations = it + 1;
        a.inertia = kernels::par::assign_clusters(values, rows, cols, a.centroids.data(), k,
                                                  a.labels.data());
        a.inertia_trace.push_back(a.inertia);
        kernels::par::accumulate_clusters(values, rows, cols, a.labels.data(), k, sums.data(),
                                          counts.data());

        // farthest-point reseeding for empty clusters
        std::vector<std::uint32_t> empties;
        for (std::uint32_t c = 0; c < k; ++c)
            if (counts[c] == 0) empties.push_back(c);
        if (!empties.empty()) {
            std::vector<double> dist(rows);
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(rows); ++i) {
                const double* row = values + static_cast<std::size_t>(i) * cols;
                const double* ctr =
                    a.centroids.data() + static_cast<std::size_t>(a.labels[i]) * cols;
                double d = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    const double diff = row[j] - ctr[j];
                    d += diff * diff;
                }
                dist[static_cast<std::size_t>(i)] = d;
            }
            std::vector<std::uint8_t> taken(rows, 0);
            for (std::uint32_t c : empties) {
                std::size_t far = 0;
                double best = -1.0;
                for (std::size_t i = 0; i < rows; ++i)
                    if (!taken[i] && dist[i] > best) {
                        best = dist[i];
                        far = i;
                    }
                taken[far] = 1;
                std::copy(values + far * cols, values + (far + 1) * cols,
                          a.centroids.begin() + static_cast<std::size_t>(c) * cols);
            }
            continue;  // re-assign against the reseeded centroids
        }

        double max_shift = 0.0;
        for (std::uint32_t c = 0; c < k; ++c) {
            double shift = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double nc = sums[static_cast<std::size_t>(c) * cols + j] /
                                  static_cast<double>(counts[c]);
                const double d = nc - a.centroids[static_cast<std::size_t>(c) * cols + j];
                shift += d * d;
                a.centroids[static_cast<std::size_t>(c) * cols + j] = nc;
            }
            max_shift = std::max(max_shift, std::sqrt(shift));
        }
        if (max_shift < kShiftTol) break;
    }
    a.inertia =
        kernels::par::assign_clusters(values, rows, cols, a.centroids.data(), k, a.labels.data());
    a.inertia_trace.push_back(a.inertia);
    return a;
}

std::optional<std::uint32_t> select_malicious_cluster(const ClusterAssignment& a,
                                                      const std::vector<std::uint8_t>& malicious) {
    std::vector<std::size_t> counts(a.k, 0);
    for (std::size_t i = 0; i < a.labels.size(); ++i)
        if (malicious[i]) ++counts[a.labels[i]];
    std::uint32_t best = 0;
    std::size_t best_count = 0;
    for (std::uint32_t c = 0; c < a.k; ++c)
        if (counts[c] > best_count) {
            best_count = counts[c];
            best = c;
        }
    if (best_count == 0) return std::nullopt;  // nothing to anchor the cluster choice
    return best;
}

namespace {

// Unit-normalizes the selected rows; returns false for zero vectors.
bool normalize_row(const double* src, std::size_t cols, double* dst) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < cols; ++j) norm2 += src[j] * src[j];
    if (norm2 == 0.0) return false;
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j] * inv;
    return true;
}

}  // namespace

FlagResult flag_suspects(const ZScoreResult& z, std::size_t rows, std::size_t cols,
                         const ClusterAssignment& a, std::uint32_t chosen,
                         const std::vector<std::uint8_t>& malicious, double epsilon) {
    if (epsilon < 0.0 || epsilon > 20.0) fail_usage("epsilon must lie in [0, 20]");
    FlagResult r;
    r.flagged.assign(rows, 0);
    r.min_distance.assign(rows, std::numeric_limits<double>::infinity());

    std::vector<std::size_t> benign_rows, malicious_rows;
    for (std::size_t i = 0; i < rows; ++i) {
        if (a.labels[i] != chosen) continue;
        (malicious[i] ? malicious_rows : benign_rows).push_back(i);
    }
    if (benign_rows.empty() || malicious_rows.empty()) return r;

    std::vector<double> b_unit, m_unit;
    std::vector<std::size_t> b_idx, m_idx;
    std::vector<double> tmp(cols);
    for (std::size_t i : benign_rows) {
        if (normalize_row(z.values.data() + i * cols, cols, tmp.data())) {
            b_unit.insert(b_unit.end(), tmp.begin(), tmp.end());
            b_idx.push_back(i);
        } else {
            ++r.zero_vector_rows;
        }
    }
    for (std::size_t i : malicious_rows) {
        if (normalize_row(z.values.data() + i * cols, cols, tmp.data())) {
            m_unit.insert(m_unit.end(), tmp.begin(), tmp.end());
            m_idx.push_back(i);
        } else {
            ++r.zero_vector_rows;
        }
    }
    if (b_idx.empty() || m_idx.empty()) return r;

    std::vector<double> min_d(b_idx.size());
    kernels::par::min_unit_distance(b_unit.data(), b_idx.size(), m_unit.data(), m_idx.size(), cols,
                                    min_d.data());
    const double threshold = std::pow(10.0, -epsilon);
    for (std::size_t bi = 0; bi < b_idx.size(); ++bi) {
        r.min_distance[b_idx[bi]] = min_d[bi];
        if (min_d[bi] <= threshold) r.flagged[b_idx[bi]] = 1;
    }
    return r;
}

EpsilonSweep epsilon_sweep(const ZScoreResult& z, std::size_t rows, std::size_t cols,
                           const ClusterAssignment& a, std::uint32_t chosen,
                           const std::vector<std::uint8_t>& malicious,
                           const std::vector<double>& grid) {
    for (double e : grid)
        if (e < 0.0 || e > 20.0) fail_usage("epsilon grid must lie within [0, 20]");
    if (!std::is_sorted(grid.begin(), grid.end()))
        fail_usage("epsilon grid must be ascending");
    // one distance pass serves the whole grid
    const FlagResult base = flag_suspects(z, rows, cols, a, chosen, malicious, 0.0);
    EpsilonSweep sweep;
    sweep.epsilons = grid;
    std::size_t prev = SIZE_MAX;
    for (double e : grid) {
        const double threshold = std::pow(10.0, -e);
        std::size_t count = 0;
        for (std::size_t i = 0; i < rows; ++i)
            if (!malicious[i] && base.min_distance[i] <= threshold) ++count;
        if (count > prev) fail_stage("epsilon sweep produced a non-monotone count");
        prev = count;
        sweep.counts.push_back(count);
    }
    return sweep;
}

std::vector<PkEntry> malicious_probability(const std::map<std::uint32_t, ActivityCounts>& counts) {
    std::vector<PkEntry> entries;
    entries.reserve(counts.size());
    for (const auto& [entity, c] : counts) {
        if (c.active == 0)
            fail_stage("entity " + std::to_string(entity) +
                       " has flags recorded but no activity; p bookkeeping is broken");
        if (c.flagged > c.active)
            fail_stage("entity " + std::to_string(entity) + " flagged more often than active");
        entries.push_back({entity, c.active, c.flagged,
                           static_cast<double>(c.flagged) / static_cast<double>(c.active)});
    }
    return entries;
}

const char* behavior_class_name(BehaviorClass c) {
    switch (c) {
        case BehaviorClass::StableBenign: return "stable-benign";
        case BehaviorClass::BehaviorChanger: return "behavior-changer";
        case BehaviorClass::PersistentSuspect: return "persistent-suspect";
    }
    return "?";
}

SuspectReport behavior_report(const std::vector<PkEntry>& entries) {
    SuspectReport r;
    r.entries = entries;
    std::sort(r.entries.begin(), r.entries.end(),
              [](const PkEntry& a, const PkEntry& b) { return a.entity < b.entity; });
    r.classes.reserve(r.entries.size());
    for (const PkEntry& e : r.entries) {
        BehaviorClass c;
        if (e.n_flagged == 0)
            c = BehaviorClass::StableBenign;
        else if (e.n_flagged == e.n_active)
            c = BehaviorClass::PersistentSuspect;
        else
            c = BehaviorClass::BehaviorChanger;
        r.classes.push_back(c);
        switch (c) {
            case BehaviorClass::StableBenign: ++r.stable_benign; break;
            case BehaviorClass::BehaviorChanger:
                ++r.behavior_changers;
                if (e.p >= 0.3 && e.p <= 0.6) ++r.changers_in_band;
                break;
            case BehaviorClass::PersistentSuspect: ++r.persistent_suspects; break;
        }
    }
    return r;
}

std::vector<std::uint32_t> persistent_entities(const SuspectReport& r) {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < r.entries.size(); ++i)
        if (r.classes[i] == BehaviorClass::PersistentSuspect) out.push_back(r.entries[i].entity);
    return out;
}

}  // namespace chainlens
