// Timing harness for the kernel pairs: serial reference vs OpenMP build.
// Results must agree bit-for-bit; runtime is the only difference.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "chainlens/common.hpp"
#include "chainlens/kernels.hpp"

using namespace chainlens;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        f();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

void report(const char* name, double serial_ms, double par_ms, bool identical) {
    std::printf("%-22s %10.2f ms %10.2f ms %8.2fx   %s\n", name, serial_ms, par_ms,
                serial_ms / par_ms, identical ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
    const std::size_t n = 4'000'000;
    const std::size_t cols = 24;
    const std::size_t rows = n / cols;
    const std::size_t k = 10;
    DetRng rng(7);

    std::vector<double> data(n);
    for (double& v : data) v = rng.next_double() * 10.0 - 5.0;

#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled; both columns run the serial build\n");
#endif
    std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    {
        double a = 0, b = 0;
        const double ts = time_best_of(5, [&] { a = kernels::serial::sum(data); });
        const double tp = time_best_of(5, [&] { b = kernels::par::sum(data); });
        report("sum", ts, tp, a == b);
    }
    {
        std::vector<double> m1(cols), s1(cols), m2(cols), s2(cols);
        const double ts = time_best_of(5, [&] {
            kernels::serial::column_moments(data.data(), rows, cols, m1.data(), s1.data());
        });
        const double tp = time_best_of(5, [&] {
            kernels::par::column_moments(data.data(), rows, cols, m2.data(), s2.data());
        });
        report("column_moments", ts, tp, m1 == m2 && s1 == s2);
    }
    {
        std::vector<double> centroids(k * cols);
        for (double& v : centroids) v = rng.next_double();
        std::vector<std::uint32_t> l1(rows), l2(rows);
        double i1 = 0, i2 = 0;
        const double ts = time_best_of(5, [&] {
            i1 = kernels::serial::assign_clusters(data.data(), rows, cols, centroids.data(), k,
                                                  l1.data());
        });
        const double tp = time_best_of(5, [&] {
            i2 = kernels::par::assign_clusters(data.data(), rows, cols, centroids.data(), k,
                                               l2.data());
        });
        report("assign_clusters", ts, tp, l1 == l2 && i1 == i2);
    }
    {
        std::vector<std::uint32_t> labels(rows);
        for (std::size_t i = 0; i < rows; ++i)
            labels[i] = static_cast<std::uint32_t>(rng.next_below(k));
        std::vector<double> s1(k * cols), s2(k * cols);
        std::vector<std::uint64_t> c1(k), c2(k);
        const double ts = time_best_of(5, [&] {
            kernels::serial::accumulate_clusters(data.data(), rows, cols, labels.data(), k,
                                                 s1.data(), c1.data());
        });
        const double tp = time_best_of(5, [&] {
            kernels::par::accumulate_clusters(data.data(), rows, cols, labels.data(), k, s2.data(),
                                              c2.data());
        });
        report("accumulate_clusters", ts, tp, s1 == s2 && c1 == c2);
    }
    {
        const std::size_t na = 3000, nb = 600;
        std::vector<double> a(na * cols), b(nb * cols);
        auto unit_fill = [&](std::vector<double>& m, std::size_t rs) {
            for (std::size_t i = 0; i < rs; ++i) {
                double norm = 0;
                for (std::size_t j = 0; j < cols; ++j) {
                    m[i * cols + j] = rng.next_double() - 0.5;
                    norm += m[i * cols + j] * m[i * cols + j];
                }
                norm = std::sqrt(norm);
                for (std::size_t j = 0; j < cols; ++j) m[i * cols + j] /= norm;
            }
        };
        unit_fill(a, na);
        unit_fill(b, nb);
        std::vector<double> d1(na), d2(na);
        const double ts = time_best_of(5, [&] {
            kernels::serial::min_unit_distance(a.data(), na, b.data(), nb, cols, d1.data());
        });
        const double tp = time_best_of(5, [&] {
            kernels::par::min_unit_distance(a.data(), na, b.data(), nb, cols, d2.data());
        });
        report("min_unit_distance", ts, tp, d1 == d2);
    }
    return 0;
}
