#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "chainlens/entities.hpp"
#include "chainlens/txstore.hpp"

namespace chainlens {

enum class Granularity : std::uint8_t { FifteenDays, OneMonth };

const char* granularity_name(Granularity g);          // "15d" / "1m"
Granularity parse_granularity(const std::string& s);  // accepts 15d/15days/1m/1month

struct Segment {
    Granularity granularity;
    std::uint32_t index;                   // position within the granularity's segment list
    std::int64_t start_time, end_time;     // [start, end), unix seconds UTC
    std::string label;                     // e.g. 2020-01 or 2020-01.2
    std::uint8_t half = 0;                 // 15d only: 1 or 2
    std::vector<std::uint32_t> tx_ordinals;
};

// Calendar segmentation over the store's wall-clock span (or an explicit
// span). 1Month: calendar months. 15Days: days 1-15 and 16-end per month.
std::vector<Segment> segment_store(const TxStore& store, Granularity g,
                                   std::optional<std::pair<std::int64_t, std::int64_t>> span = {});

// Bipartite graph: address nodes then transaction nodes. Inputs are
// address->tx edges, outputs tx->address.
struct AggregatedGraph {
    struct Edge {
        std::uint32_t from, to;  // node indices
        std::uint64_t sats;
        std::uint32_t height;
    };
    std::vector<AddressId> address_nodes;   // sorted by id; node index = position
    std::vector<std::uint32_t> tx_nodes;    // store ordinals; node index = address_nodes.size() + pos
    std::vector<Edge> edges;

    std::size_t tx_node_base() const { return address_nodes.size(); }
};

AggregatedGraph build_aggregated_graph(const TxStore& store, const Segment& seg);

// Entity-level multigraph; one edge per (input-entity, output-entity) pair
// per transaction. With several input entities the output value is split
// proportionally to input contribution using largest remainders, so satoshis
// stay integral and flow is conserved.
struct UserGraph {
    struct Edge {
        std::uint32_t src, dst;  // node indices
        std::uint64_t sats;
        std::uint32_t height;
        std::uint32_t tx_ordinal;
    };
    std::vector<std::uint32_t> entity_ids;  // sorted; node index = position
    std::vector<Edge> edges;                // chain order
    std::vector<std::vector<std::uint32_t>> in_edges, out_edges;  // per node, edge indices

    std::size_t node_of(std::uint32_t entity) const;  // throws on unknown entity
};

UserGraph build_user_graph(const TxStore& store, const Segment& seg,
                           const EntityPartition* partition);

void write_edge_csv(const UserGraph& ug, const TxStore& store, std::ostream& out);
UserGraph read_edge_csv(std::istream& in, const TxStore& store, Granularity g);

}  // namespace chainlens
