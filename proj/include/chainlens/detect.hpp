#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chainlens/features.hpp"
#include "chainlens/txstore.hpp"

namespace chainlens {

struct ZScoreResult {
    std::vector<double> values;         // rows x cols, normalized
    std::vector<double> mean, stddev;   // per column
    std::vector<std::uint8_t> constant; // zero-variance columns, passed through as 0
};

// Column-wise (x - mean)/std with population std; needs >= 2 rows.
ZScoreResult zscore_normalize(const double* values, std::size_t rows, std::size_t cols);

struct ClusterAssignment {
    std::vector<std::uint32_t> labels;  // per row
    std::vector<double> centroids;      // k x cols
    double inertia = 0;
    std::vector<double> inertia_trace;  // inertia after each assignment step
    std::uint64_t seed = 0;
    std::uint32_t iterations = 0;
    std::uint32_t k = 0;
};

// k-means++ seeding from the given seed, Lloyd iterations until the max
// centroid shift drops below 1e-6 or 300 rounds. Empty clusters re-seed to
// the point farthest from its assigned centroid. Deterministic.
ClusterAssignment kmeans(const double* values, std::size_t rows, std::size_t cols, std::uint32_t k,
                         std::uint64_t seed);

// Index of the cluster holding the most malicious rows (ties to the lowest
// index); empty when the segment has no malicious rows at all.
std::optional<std::uint32_t> select_malicious_cluster(const ClusterAssignment& a,
                                                      const std::vector<std::uint8_t>& malicious);

struct FlagResult {
    std::vector<std::uint8_t> flagged;  // per row; only benign rows in the chosen cluster can be set
    std::vector<double> min_distance;   // per row, 1 - cos to nearest malicious (inf when n/a)
    std::size_t zero_vector_rows = 0;
};

// Eq.-style rule: a benign row k in the chosen cluster is flagged when some
// malicious row l of that cluster has 1 - cos(k, l) <= 10^-epsilon. Cosine is
// taken on the normalized rows; the distance is computed as half the squared
// distance of the unit vectors so identical rows give exactly zero.
FlagResult flag_suspects(const ZScoreResult& z, std::size_t rows, std::size_t cols,
                         const ClusterAssignment& a, std::uint32_t chosen,
                         const std::vector<std::uint8_t>& malicious, double epsilon);

struct EpsilonSweep {
    std::vector<double> epsilons;
    std::vector<std::size_t> counts;  // flagged benign rows per epsilon; non-increasing
};

EpsilonSweep epsilon_sweep(const ZScoreResult& z, std::size_t rows, std::size_t cols,
                           const ClusterAssignment& a, std::uint32_t chosen,
                           const std::vector<std::uint8_t>& malicious,
                           const std::vector<double>& grid);

struct ActivityCounts {
    std::uint32_t active = 0;
    std::uint32_t flagged = 0;
};

// p = flagged/active as an exact rational.
struct PkEntry {
    std::uint32_t entity;
    std::uint32_t n_active;
    std::uint32_t n_flagged;
    double p;
};

std::vector<PkEntry> malicious_probability(const std::map<std::uint32_t, ActivityCounts>& counts);

enum class BehaviorClass : std::uint8_t { StableBenign, BehaviorChanger, PersistentSuspect };
const char* behavior_class_name(BehaviorClass c);

struct SuspectReport {
    std::vector<PkEntry> entries;            // sorted by entity
    std::vector<BehaviorClass> classes;      // parallel to entries
    std::size_t stable_benign = 0;
    std::size_t behavior_changers = 0;
    std::size_t changers_in_band = 0;        // 0.3 <= p <= 0.6
    std::size_t persistent_suspects = 0;
};

SuspectReport behavior_report(const std::vector<PkEntry>& entries);

std::vector<std::uint32_t> persistent_entities(const SuspectReport& r);

}  // namespace chainlens
