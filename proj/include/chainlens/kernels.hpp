#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

// Hot numeric loops, each in two builds: kernels::serial is the reference,
// kernels::par the OpenMP version. Floating-point accumulation runs over
// fixed-size blocks whose partials are merged in block order, so both builds
// produce bit-identical results at any thread count. The summation order is
// part of the kernel contract; tests assert exact equality.

namespace chainlens::kernels {

inline constexpr std::size_t kBlock = 2048;

inline std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

namespace serial {

double sum(std::span<const double> v);

// Per-column mean and population stddev of a row-major matrix.
void column_moments(const double* data, std::size_t rows, std::size_t cols,
                    double* mean, double* stddev);

// Nearest-centroid assignment; returns total inertia (sum of squared
// distances to the assigned centroid). Ties break to the lowest index.
double assign_clusters(const double* pts, std::size_t rows, std::size_t cols,
                       const double* centroids, std::size_t k, std::uint32_t* labels);

// Per-cluster value sums and member counts for the update step.
void accumulate_clusters(const double* pts, std::size_t rows, std::size_t cols,
                         const std::uint32_t* labels, std::size_t k,
                         double* sums, std::uint64_t* counts);

// For each unit-norm row of a, min over unit-norm rows of b of
// 0.5 * |a_i - b_j|^2  (== 1 - cos for unit vectors, exact 0 on identical rows).
void min_unit_distance(const double* a, std::size_t na, const double* b, std::size_t nb,
                       std::size_t cols, double* out_min);

}  // namespace serial

namespace par {

double sum(std::span<const double> v);
void column_moments(const double* data, std::size_t rows, std::size_t cols,
                    double* mean, double* stddev);
double assign_clusters(const double* pts, std::size_t rows, std::size_t cols,
                       const double* centroids, std::size_t k, std::uint32_t* labels);
void accumulate_clusters(const double* pts, std::size_t rows, std::size_t cols,
                         const std::uint32_t* labels, std::size_t k,
                         double* sums, std::uint64_t* counts);
void min_unit_distance(const double* a, std::size_t na, const double* b, std::size_t nb,
                       std::size_t cols, double* out_min);

}  // namespace par

}  // namespace chainlens::kernels
