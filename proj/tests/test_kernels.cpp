#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "chainlens/common.hpp"
#include "chainlens/kernels.hpp"
#include "chainlens/txstore.hpp"

using namespace chainlens;

namespace {

std::vector<double> rand_vec(std::size_t n, std::uint64_t seed) {
    DetRng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_double() * 100.0 - 50.0;
    return v;
}

}  // namespace

TEST_CASE("serial and openmp sums agree bitwise across sizes") {
    for (std::size_t n : {0UL, 1UL, 100UL, 2048UL, 2049UL, 100'000UL}) {
        const auto v = rand_vec(n, n + 1);
        CHECK(kernels::serial::sum(v) == kernels::par::sum(v));
    }
}

TEST_CASE("column moments agree bitwise and match hand values") {
    const std::size_t rows = 5000, cols = 7;
    const auto data = rand_vec(rows * cols, 3);
    std::vector<double> m1(cols), s1(cols), m2(cols), s2(cols);
    kernels::serial::column_moments(data.data(), rows, cols, m1.data(), s1.data());
    kernels::par::column_moments(data.data(), rows, cols, m2.data(), s2.data());
    CHECK(m1 == m2);
    CHECK(s1 == s2);

    // two-point column: mean 2, population std 1
    const std::vector<double> two = {1.0, 3.0};
    double mean, sd;
    kernels::serial::column_moments(two.data(), 2, 1, &mean, &sd);
    CHECK(mean == doctest::Approx(2.0));
    CHECK(sd == doctest::Approx(1.0));
}

TEST_CASE("cluster assignment and accumulation agree bitwise") {
    const std::size_t rows = 7001, cols = 5, k = 4;
    const auto data = rand_vec(rows * cols, 11);
    const auto centroids = rand_vec(k * cols, 12);
    std::vector<std::uint32_t> l1(rows), l2(rows);
    const double i1 =
        kernels::serial::assign_clusters(data.data(), rows, cols, centroids.data(), k, l1.data());
    const double i2 =
        kernels::par::assign_clusters(data.data(), rows, cols, centroids.data(), k, l2.data());
    CHECK(l1 == l2);
    CHECK(i1 == i2);

    std::vector<double> s1(k * cols), s2(k * cols);
    std::vector<std::uint64_t> c1(k), c2(k);
    kernels::serial::accumulate_clusters(data.data(), rows, cols, l1.data(), k, s1.data(),
                                         c1.data());
    kernels::par::accumulate_clusters(data.data(), rows, cols, l2.data(), k, s2.data(), c2.data());
    CHECK(s1 == s2);
    CHECK(c1 == c2);

    std::uint64_t total = 0;
    for (std::uint64_t c : c1) total += c;
    CHECK(total == rows);
}

TEST_CASE("min unit distance is exact zero on identical rows") {
    const std::size_t cols = 6;
    auto a = rand_vec(3 * cols, 21);
    // unit-normalize
    for (std::size_t i = 0; i < 3; ++i) {
        double norm = 0;
        for (std::size_t j = 0; j < cols; ++j) norm += a[i * cols + j] * a[i * cols + j];
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < cols; ++j) a[i * cols + j] /= norm;
    }
    const std::vector<double> b(a.begin(), a.begin() + cols);  // copy of row 0
    std::vector<double> d_serial(3), d_par(3);
    kernels::serial::min_unit_distance(a.data(), 3, b.data(), 1, cols, d_serial.data());
    kernels::par::min_unit_distance(a.data(), 3, b.data(), 1, cols, d_par.data());
    CHECK(d_serial == d_par);
    CHECK(d_serial[0] == 0.0);
    CHECK(d_serial[1] > 0.0);
}

TEST_CASE("civil date round trip") {
    CHECK(days_from_civil(1970, 1, 1) == 0);
    CHECK(unix_from_civil(2020, 1, 1) == 1577836800);
    const CivilDate d = civil_from_unix(1583020800);  // 2020-03-01
    CHECK(d.year == 2020);
    CHECK(d.month == 3);
    CHECK(d.day == 1);
    for (std::int64_t day : {-1000, 0, 18262, 20000}) {
        const CivilDate c = civil_from_days(day);
        CHECK(days_from_civil(c.year, c.month, c.day) == day);
    }
}

TEST_CASE("formatting round-trips doubles") {
    DetRng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = (rng.next_double() - 0.5) * std::pow(10.0, double(i % 60) - 30.0);
        CHECK(parse_double(format_double(v), "x") == v);
    }
}

TEST_CASE("address interning is bijective") {
    chainlens::AddressTable table;
    DetRng rng(9);
    std::vector<std::string> names;
    for (int i = 0; i < 5000; ++i) names.push_back("addr" + std::to_string(rng.next_below(2000)));
    std::vector<chainlens::AddressId> ids;
    for (const std::string& n : names) ids.push_back(table.intern(n));
    for (std::size_t i = 0; i < names.size(); ++i) {
        CHECK(table.name(ids[i]) == names[i]);          // id -> name
        CHECK(table.intern(names[i]) == ids[i]);        // re-intern is stable
        CHECK(table.lookup(names[i]) == ids[i]);
    }
    CHECK(table.size() <= 2000);
}
