#include "chainlens/entities.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace chainlens {

HeuristicConfig parse_heuristics_flag(const std::string& spec) {
    HeuristicConfig c = HeuristicConfig::none();
    if (spec == "none" || spec.empty()) return c;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "multi_input")
            c.multi_input = true;
        else if (item == "change")
            c.change_address = true;
        else if (item == "change_cond4prime") {
            c.change_address = true;
            c.change_variant = HeuristicConfig::ChangeVariant::Cond4Prime;
        } else if (item == "value")
            c.value_heuristic = true;
        else if (item == "growth")
            c.growth_guard = true;
        else if (item == "no_guards")
            c.no_change_guards = false;
        else
            fail_usage("unknown heuristic '" + item + "'");
    }
    return c;
}

std::string heuristics_to_string(const HeuristicConfig& c) {
    std::string s;
    auto add = [&](const char* name) {
        if (!s.empty()) s += ',';
        s += name;
    };
    if (c.multi_input) add("multi_input");
    if (c.change_address)
        add(c.change_variant == HeuristicConfig::ChangeVariant::Cond4Prime ? "change_cond4prime"
                                                                           : "change");
    if (c.value_heuristic) add("value");
    if (c.growth_guard) add("growth");
    if (!c.no_change_guards) add("no_guards");
    if (s.empty()) s = "none";
    return s;
}

AddressId UnionFind::find(AddressId a) {
    AddressId root = a;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[a] != root) {
        AddressId next = parent_[a];
        parent_[a] = root;
        a = next;
    }
    return root;
}

AddressId UnionFind::find(AddressId a) const {
    while (parent_[a] != a) a = parent_[a];
    return a;
}

bool UnionFind::merge(AddressId a, AddressId b) {
    AddressId ra = find(a), rb = find(b);
    if (ra == rb) return false;
    if (size_[ra] < size_[rb]) std::swap(ra, rb);
    if (size_[ra] == size_[rb] && rb < ra) std::swap(ra, rb);  // deterministic root
    parent_[rb] = ra;
    size_[ra] += size_[rb];
    return true;
}

void UnionFind::finalize() {
    for (AddressId a = 0; a < parent_.size(); ++a) find(a);
}

const char* heuristic_name(Heuristic h) {
    switch (h) {
        case Heuristic::MultiInput: return "multi_input";
        case Heuristic::ChangeAddress: return "change_address";
        case Heuristic::ValueBased: return "value_based";
    }
    return "?";
}

EntityPartition EntityClusters::partition(const std::vector<bool>& occurring) const {
    const std::size_t n = uf_.size();
    EntityPartition p;
    p.entity_of.resize(n);
    // min member id per root
    std::vector<AddressId> min_member(n, static_cast<AddressId>(n));
    for (AddressId a = 0; a < n; ++a) {
        const AddressId r = uf_.find(a);
        if (a < min_member[r]) min_member[r] = a;
    }
    std::vector<std::uint32_t> seen_count(n, 0);
    std::size_t total_seen = 0;
    for (AddressId a = 0; a < n; ++a) {
        const AddressId r = uf_.find(a);
        p.entity_of[a] = min_member[r];
        if (a < occurring.size() && occurring[a]) {
            ++seen_count[r];
            ++total_seen;
        }
    }
    std::uint32_t largest = 0;
    for (std::uint32_t c : seen_count) largest = std::max(largest, c);
    if (total_seen > 0) {
        p.largest_fraction = static_cast<double>(largest) / static_cast<double>(total_seen);
        p.collapse_warning = p.largest_fraction > 0.5;
    }
    return p;
}

namespace {

bool guarded_merge(EntityClusters& clusters, AddressId a, AddressId b,
                   const HeuristicConfig& config, std::uint32_t tx_ordinal) {
    if (config.growth_guard && !growth_guard(clusters.uf(), a, b, config.growth_merge_cap)) {
        clusters.rejected().push_back({tx_ordinal, a, b});
        return false;
    }
    return clusters.uf().merge(a, b);
}

std::vector<AddressId> distinct_ids(const std::vector<TxIo>& ios) {
    std::vector<AddressId> ids;
    ids.reserve(ios.size());
    for (const TxIo& io : ios) ids.push_back(io.addr);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

}  // namespace

void multi_input_merge(const TxRecord& tx, EntityClusters& clusters, std::uint32_t tx_ordinal,
                       const HeuristicConfig& config) {
    if (tx.coinbase || tx.inputs.empty()) return;
    const std::vector<AddressId> ids = distinct_ids(tx.inputs);
    if (ids.size() < 2) return;
    bool changed = false;
    for (std::size_t i = 1; i < ids.size(); ++i)
        changed |= guarded_merge(clusters, ids[0], ids[i], config, tx_ordinal);
    if (changed) clusters.log().push_back({tx_ordinal, Heuristic::MultiInput, ids});
}

std::optional<AddressId> detect_change_address(const TxStore& store, std::uint32_t ordinal,
                                               const HeuristicConfig& config) {
    const TxRecord& tx = store.txs().at(ordinal);
    if (tx.coinbase) return std::nullopt;  // condition 2

    const std::vector<AddressId> out_ids = distinct_ids(tx.outputs);
    const std::vector<AddressId> in_ids = distinct_ids(tx.inputs);

    // condition 3: a shared address makes this a self-change transaction
    for (AddressId o : out_ids)
        if (std::binary_search(in_ids.begin(), in_ids.end(), o)) return std::nullopt;

    // no-change guards
    if (config.no_change_guards) {
        for (AddressId o : out_ids) {
            if (store.receipts_before(o, ordinal) == 1) return std::nullopt;   // 5
            if (store.self_change_before(o, ordinal)) return std::nullopt;     // 6
        }
    }

    std::vector<AddressId> candidates;
    if (config.change_variant == HeuristicConfig::ChangeVariant::Cond4) {
        for (AddressId o : out_ids)
            if (!store.appears_before(o, ordinal)) candidates.push_back(o);  // condition 1
    } else {
        // variant 4': o_j is fresh, every other output address is reused as
        // an output in some later transaction
        for (AddressId o : out_ids) {
            if (store.appears_before(o, ordinal)) continue;
            bool others_reused = true;
            for (AddressId other : out_ids) {
                if (other == o) continue;
                if (!store.received_after(other, ordinal)) {
                    others_reused = false;
                    break;
                }
            }
            if (others_reused) candidates.push_back(o);
        }
    }
    if (candidates.size() != 1) return std::nullopt;  // condition 4: uniqueness
    return candidates[0];
}

bool value_heuristic_filter(const TxRecord& tx, AddressId candidate) {
    std::uint64_t received = 0;
    for (const TxIo& io : tx.outputs)
        if (io.addr == candidate) received += io.sats;
    for (const TxIo& io : tx.inputs)
        if (received >= io.sats) return false;
    return true;
}

bool growth_guard(UnionFind& uf, AddressId a, AddressId b, std::uint32_t cap) {
    return std::min(uf.set_size(a), uf.set_size(b)) <= cap;
}

EntityClusters cluster_entities(const TxStore& store, const HeuristicConfig& config) {
    EntityClusters clusters(store.addresses().size());
    for (std::uint32_t ord = 0; ord < store.txs().size(); ++ord) {
        const TxRecord& tx = store.txs()[ord];
        if (config.multi_input) multi_input_merge(tx, clusters, ord, config);
        if (config.change_address && !tx.coinbase && !tx.inputs.empty()) {
            const auto change = detect_change_address(store, ord, config);
            if (change && (!config.value_heuristic || value_heuristic_filter(tx, *change))) {
                if (guarded_merge(clusters, tx.inputs[0].addr, *change, config, ord))
                    clusters.log().push_back(
                        {ord,
                         config.value_heuristic ? Heuristic::ValueBased : Heuristic::ChangeAddress,
                         {tx.inputs[0].addr, *change}});
            }
        }
    }
    clusters.uf().finalize();
    return clusters;
}

UnionFind replay_merge_log(const std::vector<MergeEvent>& log, std::size_t n_addresses) {
    UnionFind uf(n_addresses);
    for (const MergeEvent& ev : log)
        for (std::size_t i = 1; i < ev.members.size(); ++i) uf.merge(ev.members[0], ev.members[i]);
    uf.finalize();
    return uf;
}

std::vector<bool> occurring_addresses(const TxStore& store) {
    std::vector<bool> seen(store.addresses().size(), false);
    for (const TxRecord& tx : store.txs()) {
        for (const TxIo& io : tx.inputs) seen[io.addr] = true;
        for (const TxIo& io : tx.outputs) seen[io.addr] = true;
    }
    return seen;
}

void write_partition_csv(const EntityPartition& partition, const std::vector<bool>& occurring,
                         const AddressTable& table, std::ostream& out) {
    out << "address,entity_id\n";
    for (AddressId a = 0; a < partition.entity_of.size(); ++a) {
        if (a < occurring.size() && !occurring[a]) continue;
        out << table.name(a) << ',' << partition.entity_of[a] << '\n';
    }
}

void write_merge_log_jsonl(const EntityClusters& clusters, const TxStore& store,
                           std::ostream& out) {
    for (const MergeEvent& ev : clusters.log()) {
        nlohmann::ordered_json j;
        j["txid"] = store.txs()[ev.tx_ordinal].txid;
        j["heuristic"] = heuristic_name(ev.heuristic);
        auto& members = j["members"] = nlohmann::ordered_json::array();
        for (AddressId a : ev.members) members.push_back(store.addresses().name(a));
        out << j.dump() << '\n';
    }
}

EntityPartition read_partition_csv(std::istream& in, AddressTable& table) {
    std::string line;
    if (!std::getline(in, line) || (line != "address,entity_id" && line != "address,entity_id\r"))
        fail_data("partition CSV must start with header 'address,entity_id'");
    std::vector<std::pair<AddressId, AddressId>> pairs;
    AddressId max_id = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos)
            fail_data("partition CSV line " + std::to_string(lineno) + ": missing comma");
        const AddressId a = table.intern(line.substr(0, comma));
        const AddressId e =
            static_cast<AddressId>(parse_i64(line.substr(comma + 1), "entity_id"));
        pairs.emplace_back(a, e);
        max_id = std::max({max_id, a, e});
    }
    EntityPartition p;
    p.entity_of.resize(static_cast<std::size_t>(max_id) + 1);
    for (AddressId a = 0; a < p.entity_of.size(); ++a) p.entity_of[a] = a;
    for (auto [a, e] : pairs) p.entity_of[a] = e;
    return p;
}

}  // namespace chainlens
