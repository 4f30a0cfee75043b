#include "chainlens/graphs.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace chainlens {

const char* granularity_name(Granularity g) {
    return g == Granularity::FifteenDays ? "15d" : "1m";
}

Granularity parse_granularity(const std::string& s) {
    if (s == "15d" || s == "15days" || s == "15Days") return Granularity::FifteenDays;
    if (s == "1m" || s == "1month" || s == "1Month") return Granularity::OneMonth;
    fail_usage("unknown granularity '" + s + "' (expected 15d or 1m)");
}

namespace {

std::string month_label(int y, unsigned m) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", y, m);
    return buf;
}

}  // namespace

std::vector<Segment> segment_store(const TxStore& store, Granularity g,
                                   std::optional<std::pair<std::int64_t, std::int64_t>> span) {
    std::int64_t lo, hi;  // inclusive span of timestamps to cover
    if (span) {
        lo = span->first;
        hi = span->second;
        if (lo > hi) fail_usage("segment span start is after its end");
        std::string offenders;
        int n_off = 0;
        for (const TxRecord& tx : store.txs())
            if (tx.time < lo || tx.time > hi) {
                if (n_off < 5) offenders += (offenders.empty() ? "" : ", ") + tx.txid;
                ++n_off;
            }
        if (n_off)
            fail_data("found " + std::to_string(n_off) +
                      " transaction(s) outside the configured span: " + offenders +
                      (n_off > 5 ? ", ..." : ""));
    } else {
        if (store.txs().empty()) return {};
        lo = hi = store.txs().front().time;
        for (const TxRecord& tx : store.txs()) {
            lo = std::min(lo, tx.time);
            hi = std::max(hi, tx.time);
        }
    }

    std::vector<Segment> segments;
    CivilDate first = civil_from_unix(lo);
    CivilDate last = civil_from_unix(hi);
    int y = first.year;
    unsigned m = first.month;
    std::uint32_t index = 0;
    while (y < last.year || (y == last.year && m <= last.month)) {
        const std::int64_t month_start = unix_from_civil(y, m, 1);
        const std::int64_t mid = unix_from_civil(y, m, 16);
        int ny = y;
        unsigned nm = m;
        next_month(ny, nm);
        const std::int64_t month_end = unix_from_civil(ny, nm, 1);
        if (g == Granularity::OneMonth) {
            segments.push_back(
                {g, index++, month_start, month_end, month_label(y, m), 0, {}});
        } else {
            segments.push_back(
                {g, index++, month_start, mid, month_label(y, m) + ".1", 1, {}});
            segments.push_back({g, index++, mid, month_end, month_label(y, m) + ".2", 2, {}});
        }
        y = ny;
        m = nm;
    }

    for (std::uint32_t ord = 0; ord < store.txs().size(); ++ord) {
        const std::int64_t t = store.txs()[ord].time;
        if (t < lo || t > hi) continue;  // only possible with an explicit span; checked above
        // segments are chronological; binary search by start
        auto it = std::upper_bound(segments.begin(), segments.end(), t,
                                   [](std::int64_t v, const Segment& s) { return v < s.start_time; });
        if (it == segments.begin()) continue;
        --it;
        if (t >= it->start_time && t < it->end_time) it->tx_ordinals.push_back(ord);
    }
    return segments;
}

AggregatedGraph build_aggregated_graph(const TxStore& store, const Segment& seg) {
    AggregatedGraph ag;
    for (std::uint32_t ord : seg.tx_ordinals) {
        const TxRecord& tx = store.txs()[ord];
        for (const TxIo& io : tx.inputs) ag.address_nodes.push_back(io.addr);
        for (const TxIo& io : tx.outputs) ag.address_nodes.push_back(io.addr);
    }
    std::sort(ag.address_nodes.begin(), ag.address_nodes.end());
    ag.address_nodes.erase(std::unique(ag.address_nodes.begin(), ag.address_nodes.end()),
                           ag.address_nodes.end());
    ag.tx_nodes = seg.tx_ordinals;

    auto addr_node = [&](AddressId a) {
        return static_cast<std::uint32_t>(
            std::lower_bound(ag.address_nodes.begin(), ag.address_nodes.end(), a) -
            ag.address_nodes.begin());
    };
    for (std::size_t i = 0; i < ag.tx_nodes.size(); ++i) {
        const TxRecord& tx = store.txs()[ag.tx_nodes[i]];
        const std::uint32_t tnode = static_cast<std::uint32_t>(ag.tx_node_base() + i);
        for (const TxIo& io : tx.inputs)
            ag.edges.push_back({addr_node(io.addr), tnode, io.sats, tx.height});
        for (const TxIo& io : tx.outputs)
            ag.edges.push_back({tnode, addr_node(io.addr), io.sats, tx.height});
    }
    return ag;
}

namespace {

// Splits `total` across contributions proportionally, assigning leftover
// units by descending fractional remainder (ties to the earlier index).
std::vector<std::uint64_t> largest_remainder_split(std::uint64_t total,
                                                   const std::vector<std::uint64_t>& contrib) {
    const std::size_t n = contrib.size();
    unsigned __int128 csum = 0;
    for (std::uint64_t c : contrib) csum += c;
    std::vector<std::uint64_t> share(n, 0);
    if (csum == 0) {
        // no weighting possible; give everything to the first party
        if (n) share[0] = total;
        return share;
    }
    std::vector<unsigned __int128> rem(n);
    unsigned __int128 assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned __int128 num = static_cast<unsigned __int128>(total) * contrib[i];
        share[i] = static_cast<std::uint64_t>(num / csum);
        rem[i] = num % csum;
        assigned += share[i];
    }
    std::uint64_t leftover = total - static_cast<std::uint64_t>(assigned);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t i = 0; leftover > 0; i = (i + 1) % n, --leftover) share[order[i]] += 1;
    return share;
}

}  // namespace

std::size_t UserGraph::node_of(std::uint32_t entity) const {
    auto it = std::lower_bound(entity_ids.begin(), entity_ids.end(), entity);
    if (it == entity_ids.end() || *it != entity) fail_stage("entity not present in user graph");
    return static_cast<std::size_t>(it - entity_ids.begin());
}

UserGraph build_user_graph(const TxStore& store, const Segment& seg,
                           const EntityPartition* partition) {
    auto entity_of = [&](AddressId a) -> std::uint32_t {
        if (!partition) return a;
        if (a >= partition->entity_of.size())
            fail_data("address " + store.addresses().name(a) +
                      " is not covered by the entity partition");
        return partition->entity_of[a];
    };

    UserGraph ug;
    for (std::uint32_t ord : seg.tx_ordinals) {
        const TxRecord& tx = store.txs()[ord];
        for (const TxIo& io : tx.inputs) ug.entity_ids.push_back(entity_of(io.addr));
        for (const TxIo& io : tx.outputs) ug.entity_ids.push_back(entity_of(io.addr));
    }
    std::sort(ug.entity_ids.begin(), ug.entity_ids.end());
    ug.entity_ids.erase(std::unique(ug.entity_ids.begin(), ug.entity_ids.end()),
                        ug.entity_ids.end());

    for (std::uint32_t ord : seg.tx_ordinals) {
        const TxRecord& tx = store.txs()[ord];
        if (tx.inputs.empty()) continue;  // coinbase has no sending entity

        // distinct input entities with their contributed value, sorted by id
        std::map<std::uint32_t, std::uint64_t> senders;
        for (const TxIo& io : tx.inputs) senders[entity_of(io.addr)] += io.sats;
        std::map<std::uint32_t, std::uint64_t> receivers;
        for (const TxIo& io : tx.outputs) receivers[entity_of(io.addr)] += io.sats;

        if (senders.size() == 1) {
            const auto src = static_cast<std::uint32_t>(ug.node_of(senders.begin()->first));
            for (const auto& [ent, sats] : receivers)
                ug.edges.push_back(
                    {src, static_cast<std::uint32_t>(ug.node_of(ent)), sats, tx.height, ord});
        } else {
            std::vector<std::uint32_t> sender_ids;
            std::vector<std::uint64_t> contrib;
            for (const auto& [ent, sats] : senders) {
                sender_ids.push_back(ent);
                contrib.push_back(sats);
            }
            for (const auto& [ent, sats] : receivers) {
                const auto dst = static_cast<std::uint32_t>(ug.node_of(ent));
                const std::vector<std::uint64_t> shares = largest_remainder_split(sats, contrib);
                for (std::size_t i = 0; i < sender_ids.size(); ++i)
                    ug.edges.push_back({static_cast<std::uint32_t>(ug.node_of(sender_ids[i])), dst,
                                        shares[i], tx.height, ord});
            }
        }
    }

    ug.in_edges.resize(ug.entity_ids.size());
    ug.out_edges.resize(ug.entity_ids.size());
    for (std::uint32_t e = 0; e < ug.edges.size(); ++e) {
        ug.out_edges[ug.edges[e].src].push_back(e);
        ug.in_edges[ug.edges[e].dst].push_back(e);
    }
    return ug;
}

void write_edge_csv(const UserGraph& ug, const TxStore& store, std::ostream& out) {
    out << "src,dst,sats,height,txid\n";
    for (const UserGraph::Edge& e : ug.edges)
        out << ug.entity_ids[e.src] << ',' << ug.entity_ids[e.dst] << ',' << e.sats << ','
            << e.height << ',' << store.txs()[e.tx_ordinal].txid << '\n';
}

UserGraph read_edge_csv(std::istream& in, const TxStore& store, Granularity) {
    std::string line;
    if (!std::getline(in, line)) fail_data("empty edge CSV");
    std::unordered_map<std::string, std::uint32_t> txid_to_ordinal;
    for (std::uint32_t i = 0; i < store.txs().size(); ++i)
        txid_to_ordinal.emplace(store.txs()[i].txid, i);

    struct Raw {
        std::uint32_t src, dst;
        std::uint64_t sats;
        std::uint32_t height, ord;
    };
    std::vector<Raw> raws;
    while (std::getline(in, line)) {
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[5];
        for (int i = 0; i < 5; ++i)
            if (!std::getline(ss, f[i], ',')) fail_data("edge CSV: short row '" + line + "'");
        auto it = txid_to_ordinal.find(f[4]);
        if (it == txid_to_ordinal.end()) fail_data("edge CSV references unknown txid " + f[4]);
        raws.push_back({static_cast<std::uint32_t>(parse_i64(f[0], "src")),
                        static_cast<std::uint32_t>(parse_i64(f[1], "dst")),
                        static_cast<std::uint64_t>(parse_i64(f[2], "sats")),
                        static_cast<std::uint32_t>(parse_i64(f[3], "height")), it->second});
    }
    UserGraph ug;
    for (const Raw& r : raws) {
        ug.entity_ids.push_back(r.src);
        ug.entity_ids.push_back(r.dst);
    }
    std::sort(ug.entity_ids.begin(), ug.entity_ids.end());
    ug.entity_ids.erase(std::unique(ug.entity_ids.begin(), ug.entity_ids.end()),
                        ug.entity_ids.end());
    for (const Raw& r : raws)
        ug.edges.push_back({static_cast<std::uint32_t>(ug.node_of(r.src)),
                            static_cast<std::uint32_t>(ug.node_of(r.dst)), r.sats, r.height,
                            r.ord});
    ug.in_edges.resize(ug.entity_ids.size());
    ug.out_edges.resize(ug.entity_ids.size());
    for (std::uint32_t e = 0; e < ug.edges.size(); ++e) {
        ug.out_edges[ug.edges[e].src].push_back(e);
        ug.in_edges[ug.edges[e].dst].push_back(e);
    }
    return ug;
}

}  // namespace chainlens
