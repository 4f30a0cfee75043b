#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chainlens/graphs.hpp"

namespace chainlens {

// Row-major per-entity feature values for one (segment, variant). Presence
// masks for the temporal signals ride along outside the feature schema.
struct FeatureMatrix {
    std::vector<std::string> names;        // feature schema
    std::vector<std::uint32_t> entities;   // sorted row keys
    std::vector<double> values;            // rows x names
    std::vector<std::string> mask_names;   // variant 3 only
    std::vector<std::uint8_t> masks;       // rows x mask_names

    Granularity granularity = Granularity::OneMonth;
    std::uint32_t segment = 0;
    int variant = 1;

    std::size_t rows() const { return entities.size(); }
    std::size_t cols() const { return names.size(); }
    double at(std::size_t r, std::size_t c) const { return values[r * names.size() + c]; }
    std::size_t column(const std::string& name) const;  // throws when absent
};

struct SummaryStats {
    std::vector<std::string> stats{"max", "mean", "std"};
};

struct FeatureOptions {
    SummaryStats stats;
    std::uint32_t attractiveness_window = 144;  // blocks, roughly one day
};

inline const std::vector<std::string>& non_temporal_schema() {
    static const std::vector<std::string> kSchema = {
        "in_degree",       "out_degree",      "total_degree",
        "unique_in_degree", "unique_out_degree", "unique_total_degree",
        "clustering_coefficient",
        "max_in_payment",  "max_out_payment",
        "in_balance",      "out_balance",     "txn_sum",
        "first_txn_block", "last_txn_block",  "active_span"};
    return kSchema;
}

inline const std::vector<std::string>& temporal_signals() {
    static const std::vector<std::string> kSignals = {"degree_burst", "balance_burst",
                                                      "inter_event", "attractiveness"};
    return kSignals;
}

FeatureMatrix non_temporal_features(const UserGraph& ug, const Segment& seg);

// Block gaps between an entity's consecutive transactions within the segment.
std::vector<std::uint32_t> inter_event_times(std::size_t node, const UserGraph& ug);

// Fraction of the window's counterparties already seen in earlier windows of
// the segment; windows with no activity are skipped.
std::vector<double> attractiveness_series(std::size_t node, const UserGraph& ug,
                                          const Segment& seg, std::uint32_t window);

struct SeriesSummary {
    std::vector<double> values;
    bool present = false;
};

SeriesSummary summarize_series(std::span<const double> series, const SummaryStats& stats);

// Per-active-block increment series used for the burst signals.
std::vector<double> degree_increment_series(std::size_t node, const UserGraph& ug);
std::vector<double> balance_increment_series(std::size_t node, const UserGraph& ug);

// variant 1: non-temporal over raw addresses; 2: non-temporal over entities;
// 3: variant 2 plus summarized temporal signals.
FeatureMatrix assemble_dataset(const TxStore& store, const Segment& seg, int variant,
                               const EntityPartition* partition, const FeatureOptions& opts);
FeatureMatrix assemble_from_graph(const UserGraph& ug, const Segment& seg, int variant,
                                  const FeatureOptions& opts);

void write_feature_csv(const FeatureMatrix& m, std::ostream& out);
FeatureMatrix read_feature_csv(std::istream& in, Granularity g, std::uint32_t segment,
                               int variant);

}  // namespace chainlens
