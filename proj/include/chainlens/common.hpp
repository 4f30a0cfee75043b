#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace chainlens {

// Exit-code mapping: Usage -> 1, Data/Auth -> 2, Stage -> 3.
enum class ErrorKind { Usage, Data, Auth, Stage };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorKind::Usage, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorKind::Data, msg); }
[[noreturn]] inline void fail_stage(const std::string& msg) { throw Error(ErrorKind::Stage, msg); }

// splitmix64-based generator. std::uniform_*_distribution is
// implementation-defined, so every draw we persist goes through this.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // [0, n), n >= 1; rejection keeps it unbiased
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Box-Muller, deterministic
    double next_normal();

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t v);

// Shortest round-trip formatting; the canonical number form in every artifact.
std::string format_double(double v);
std::string format_u64(std::uint64_t v);
std::string format_i64(std::int64_t v);

double parse_double(std::string_view s, const std::string& what);
std::int64_t parse_i64(std::string_view s, const std::string& what);

// Proleptic-Gregorian civil date math (UTC). Kept local because the
// toolchain's <chrono> calendar support is spotty.
struct CivilDate {
    int year;
    unsigned month;  // 1..12
    unsigned day;    // 1..31
};

std::int64_t days_from_civil(int y, unsigned m, unsigned d);
CivilDate civil_from_days(std::int64_t z);
CivilDate civil_from_unix(std::int64_t secs);
std::int64_t unix_from_civil(int y, unsigned m, unsigned d);
void next_month(int& y, unsigned& m);

}  // namespace chainlens
