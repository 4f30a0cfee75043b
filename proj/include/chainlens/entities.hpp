#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chainlens/txstore.hpp"

namespace chainlens {

// Which rules participate in entity resolution. Defaults: multi-input plus
// change-address detection with the no-change guards, nothing else.
struct HeuristicConfig {
    bool multi_input = true;
    bool change_address = true;
    enum class ChangeVariant { Cond4, Cond4Prime } change_variant = ChangeVariant::Cond4;
    bool no_change_guards = true;
    bool value_heuristic = false;
    bool growth_guard = false;
    std::uint32_t growth_merge_cap = 100;

    static HeuristicConfig none() {
        HeuristicConfig c;
        c.multi_input = false;
        c.change_address = false;
        return c;
    }
};

HeuristicConfig parse_heuristics_flag(const std::string& spec);
std::string heuristics_to_string(const HeuristicConfig& c);

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
        for (std::size_t i = 0; i < n; ++i) parent_[i] = static_cast<AddressId>(i);
    }

    AddressId find(AddressId a);
    AddressId find(AddressId a) const;  // no mutation; valid after finalize
    // Returns true when the union changed the structure.
    bool merge(AddressId a, AddressId b);
    std::uint32_t set_size(AddressId a) { return size_[find(a)]; }
    void finalize();  // full path compression
    std::size_t size() const { return parent_.size(); }

private:
    std::vector<AddressId> parent_;
    std::vector<std::uint32_t> size_;
};

enum class Heuristic : std::uint8_t { MultiInput, ChangeAddress, ValueBased };
const char* heuristic_name(Heuristic h);

struct MergeEvent {
    std::uint32_t tx_ordinal;
    Heuristic heuristic;
    std::vector<AddressId> members;
};

struct RejectedMerge {
    std::uint32_t tx_ordinal;
    AddressId a;
    AddressId b;
};

// Address -> entity mapping, the shape every downstream stage consumes.
// Entity id is the smallest member address id, so it is independent of
// merge order.
struct EntityPartition {
    std::vector<AddressId> entity_of;  // indexed by AddressId
    bool collapse_warning = false;     // one entity holds > 50% of seen addresses
    double largest_fraction = 0.0;

    AddressId entity(AddressId a) const {
        return a < entity_of.size() ? entity_of[a] : a;
    }
};

class EntityClusters {
public:
    explicit EntityClusters(std::size_t n_addresses) : uf_(n_addresses) {}

    UnionFind& uf() { return uf_; }
    const UnionFind& uf() const { return uf_; }
    std::vector<MergeEvent>& log() { return log_; }
    const std::vector<MergeEvent>& log() const { return log_; }
    std::vector<RejectedMerge>& rejected() { return rejected_; }
    const std::vector<RejectedMerge>& rejected() const { return rejected_; }

    // Canonicalizes to min-member ids. occurring == addresses that actually
    // appear in the store (label-only ids do not count toward collapse).
    EntityPartition partition(const std::vector<bool>& occurring) const;

private:
    UnionFind uf_;
    std::vector<MergeEvent> log_;
    std::vector<RejectedMerge> rejected_;
};

// Unions all input addresses of one transaction. No-op for coinbase.
void multi_input_merge(const TxRecord& tx, EntityClusters& clusters, std::uint32_t tx_ordinal,
                       const HeuristicConfig& config);

// Evaluates the change conditions for the transaction at `ordinal` against
// the store's occurrence index. Returns the change output address when the
// active condition set identifies exactly one.
std::optional<AddressId> detect_change_address(const TxStore& store, std::uint32_t ordinal,
                                               const HeuristicConfig& config);

// True when the candidate's received value is strictly below every input
// value (a change larger than some input would make that input redundant).
bool value_heuristic_filter(const TxRecord& tx, AddressId candidate);

// True when the merge respects steady growth: the smaller side is at most
// `cap` addresses.
bool growth_guard(UnionFind& uf, AddressId a, AddressId b, std::uint32_t cap);

// Single forward pass in store order: multi-input merge, then change-address
// union subject to the configured filters. Deterministic.
EntityClusters cluster_entities(const TxStore& store, const HeuristicConfig& config);

// Replays a merge log onto a fresh union-find of the given size.
UnionFind replay_merge_log(const std::vector<MergeEvent>& log, std::size_t n_addresses);

std::vector<bool> occurring_addresses(const TxStore& store);

void write_partition_csv(const EntityPartition& partition, const std::vector<bool>& occurring,
                         const AddressTable& table, std::ostream& out);
void write_merge_log_jsonl(const EntityClusters& clusters, const TxStore& store,
                           std::ostream& out);
EntityPartition read_partition_csv(std::istream& in, AddressTable& table);

}  // namespace chainlens
