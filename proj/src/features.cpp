#include "chainlens/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace chainlens {

std::size_t FeatureMatrix::column(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    fail_stage("feature matrix has no column '" + name + "'");
}

namespace {

// Distinct counterparties over the given edge lists, self included when a
// self-loop exists.
std::vector<std::uint32_t> counterparties(std::size_t node, const UserGraph& ug,
                                          bool incoming, bool outgoing) {
    std::vector<std::uint32_t> peers;
    if (incoming)
        for (std::uint32_t e : ug.in_edges[node]) peers.push_back(ug.edges[e].src);
    if (outgoing)
        for (std::uint32_t e : ug.out_edges[node]) peers.push_back(ug.edges[e].dst);
    std::sort(peers.begin(), peers.end());
    peers.erase(std::unique(peers.begin(), peers.end()), peers.end());
    return peers;
}

double local_clustering(std::size_t node,
                        const std::vector<std::vector<std::uint32_t>>& simple_nbrs) {
    const auto& nbrs = simple_nbrs[node];
    const std::size_t k = nbrs.size();
    if (k < 2) return 0.0;
    std::uint64_t links = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& ni = simple_nbrs[nbrs[i]];
        for (std::size_t j = i + 1; j < k; ++j)
            if (std::binary_search(ni.begin(), ni.end(), nbrs[j])) ++links;
    }
    return 2.0 * static_cast<double>(links) / (static_cast<double>(k) * static_cast<double>(k - 1));
}

// Sorted distinct tx events (ordinal, height) the node participates in.
std::vector<std::pair<std::uint32_t, std::uint32_t>> node_events(std::size_t node,
                                                                 const UserGraph& ug) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ev;
    for (std::uint32_t e : ug.in_edges[node])
        ev.emplace_back(ug.edges[e].tx_ordinal, ug.edges[e].height);
    for (std::uint32_t e : ug.out_edges[node])
        ev.emplace_back(ug.edges[e].tx_ordinal, ug.edges[e].height);
    std::sort(ev.begin(), ev.end());
    ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
    return ev;
}

}  // namespace

FeatureMatrix non_temporal_features(const UserGraph& ug, const Segment& seg) {
    FeatureMatrix m;
    m.granularity = seg.granularity;
    m.segment = seg.index;
    m.names = non_temporal_schema();
    m.entities = ug.entity_ids;
    const std::size_t n = ug.entity_ids.size();
    const std::size_t cols = m.names.size();
    m.values.assign(n * cols, 0.0);

    // undirected simple projection (self-loops dropped) for the clustering
    // coefficient
    std::vector<std::vector<std::uint32_t>> simple_nbrs(n);
    for (const UserGraph::Edge& e : ug.edges) {
        if (e.src == e.dst) continue;
        simple_nbrs[e.src].push_back(e.dst);
        simple_nbrs[e.dst].push_back(e.src);
    }
    for (auto& nbrs : simple_nbrs) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }

#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t ni = 0; ni < static_cast<std::int64_t>(n); ++ni) {
        const std::size_t node = static_cast<std::size_t>(ni);
        double* row = m.values.data() + node * cols;
        const auto& ins = ug.in_edges[node];
        const auto& outs = ug.out_edges[node];

        std::uint64_t in_bal = 0, out_bal = 0, max_in = 0, max_out = 0;
        std::uint32_t first_block = UINT32_MAX, last_block = 0;
        for (std::uint32_t e : ins) {
            in_bal += ug.edges[e].sats;
            max_in = std::max(max_in, ug.edges[e].sats);
            first_block = std::min(first_block, ug.edges[e].height);
            last_block = std::max(last_block, ug.edges[e].height);
        }
        for (std::uint32_t e : outs) {
            out_bal += ug.edges[e].sats;
            max_out = std::max(max_out, ug.edges[e].sats);
            first_block = std::min(first_block, ug.edges[e].height);
            last_block = std::max(last_block, ug.edges[e].height);
        }
        if (first_block == UINT32_MAX) first_block = last_block = 0;

        row[0] = static_cast<double>(ins.size());
        row[1] = static_cast<double>(outs.size());
        row[2] = static_cast<double>(ins.size() + outs.size());
        row[3] = static_cast<double>(counterparties(node, ug, true, false).size());
        row[4] = static_cast<double>(counterparties(node, ug, false, true).size());
        row[5] = static_cast<double>(counterparties(node, ug, true, true).size());
        row[6] = local_clustering(node, simple_nbrs);
        row[7] = static_cast<double>(max_in);
        row[8] = static_cast<double>(max_out);
        row[9] = static_cast<double>(in_bal);
        row[10] = static_cast<double>(out_bal);
        row[11] = static_cast<double>(in_bal) - static_cast<double>(out_bal);
        row[12] = static_cast<double>(first_block);
        row[13] = static_cast<double>(last_block);
        row[14] = static_cast<double>(last_block - first_block);
    }
    return m;
}

std::vector<std::uint32_t> inter_event_times(std::size_t node, const UserGraph& ug) {
    const auto ev = node_events(node, ug);
    std::vector<std::uint32_t> gaps;
    for (std::size_t i = 1; i < ev.size(); ++i) gaps.push_back(ev[i].second - ev[i - 1].second);
    return gaps;
}

std::vector<double> attractiveness_series(std::size_t node, const UserGraph& ug,
                                          const Segment& seg, std::uint32_t window) {
    if (window < 1) fail_usage("attractiveness window must be >= 1");
    // window index relative to the segment's first active block
    std::uint32_t base = UINT32_MAX;
    for (const UserGraph::Edge& e : ug.edges) base = std::min(base, e.height);
    if (base == UINT32_MAX) return {};
    (void)seg;

    // (window, peer) pairs for this node, both directions
    std::vector<std::pair<std::uint32_t, std::uint32_t>> wp;
    for (std::uint32_t e : ug.in_edges[node])
        wp.emplace_back((ug.edges[e].height - base) / window, ug.edges[e].src);
    for (std::uint32_t e : ug.out_edges[node])
        wp.emplace_back((ug.edges[e].height - base) / window, ug.edges[e].dst);
    std::sort(wp.begin(), wp.end());
    wp.erase(std::unique(wp.begin(), wp.end()), wp.end());

    std::vector<double> series;
    std::unordered_set<std::uint32_t> prior;
    std::size_t i = 0;
    while (i < wp.size()) {
        std::size_t j = i;
        while (j < wp.size() && wp[j].first == wp[i].first) ++j;
        std::size_t known = 0;
        for (std::size_t t = i; t < j; ++t)
            if (prior.count(wp[t].second)) ++known;
        series.push_back(static_cast<double>(known) / static_cast<double>(j - i));
        for (std::size_t t = i; t < j; ++t) prior.insert(wp[t].second);
        i = j;
    }
    return series;
}

SeriesSummary summarize_series(std::span<const double> series, const SummaryStats& stats) {
    if (stats.stats.empty()) fail_usage("summary stat set must not be empty");
    SeriesSummary out;
    out.present = !series.empty();
    double maxv = 0, mean = 0, sd = 0;
    if (out.present) {
        maxv = series[0];
        double sum = 0;
        for (double v : series) {
            maxv = std::max(maxv, v);
            sum += v;
        }
        mean = sum / static_cast<double>(series.size());
        double ss = 0;
        for (double v : series) ss += (v - mean) * (v - mean);
        sd = std::sqrt(ss / static_cast<double>(series.size()));
    }
    for (const std::string& s : stats.stats) {
        if (s == "max")
            out.values.push_back(maxv);
        else if (s == "mean")
            out.values.push_back(mean);
        else if (s == "std")
            out.values.push_back(sd);
        else
            fail_usage("unknown summary stat '" + s + "'");
    }
    return out;
}

namespace {

// events grouped per block with (edge count, net flow)
std::vector<std::pair<double, double>> per_block_increments(std::size_t node,
                                                            const UserGraph& ug) {
    std::vector<std::pair<std::uint32_t, std::pair<double, double>>> acc;
    auto add = [&](std::uint32_t h, double deg, double flow) {
        acc.emplace_back(h, std::make_pair(deg, flow));
    };
    for (std::uint32_t e : ug.in_edges[node])
        add(ug.edges[e].height, 1.0, static_cast<double>(ug.edges[e].sats));
    for (std::uint32_t e : ug.out_edges[node])
        add(ug.edges[e].height, 1.0, -static_cast<double>(ug.edges[e].sats));
    std::sort(acc.begin(), acc.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<double, double>> blocks;
    std::size_t i = 0;
    while (i < acc.size()) {
        std::size_t j = i;
        double deg = 0, flow = 0;
        while (j < acc.size() && acc[j].first == acc[i].first) {
            deg += acc[j].second.first;
            flow += acc[j].second.second;
            ++j;
        }
        blocks.emplace_back(deg, flow);
        i = j;
    }
    return blocks;
}

}  // namespace

std::vector<double> degree_increment_series(std::size_t node, const UserGraph& ug) {
    std::vector<double> s;
    for (const auto& b : per_block_increments(node, ug)) s.push_back(b.first);
    return s;
}

std::vector<double> balance_increment_series(std::size_t node, const UserGraph& ug) {
    std::vector<double> s;
    for (const auto& b : per_block_increments(node, ug)) s.push_back(b.second);
    return s;
}

FeatureMatrix assemble_from_graph(const UserGraph& ug, const Segment& seg, int variant,
                                  const FeatureOptions& opts) {
    if (variant < 1 || variant > 3) fail_usage("variant must be 1, 2 or 3");
    FeatureMatrix m = non_temporal_features(ug, seg);
    m.variant = variant;
    if (variant < 3) return m;

    const auto& signals = temporal_signals();
    const std::size_t base_cols = m.names.size();
    const std::size_t n_stats = opts.stats.stats.size();
    for (const std::string& sig : signals)
        for (const std::string& st : opts.stats.stats) m.names.push_back(sig + "_" + st);
    for (const std::string& sig : signals) m.mask_names.push_back("has_" + sig);

    const std::size_t n = m.entities.size();
    const std::size_t cols = m.names.size();
    std::vector<double> values(n * cols, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        std::copy(m.values.begin() + r * base_cols, m.values.begin() + (r + 1) * base_cols,
                  values.begin() + r * cols);
    m.values = std::move(values);
    m.masks.assign(n * signals.size(), 0);

#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t ni = 0; ni < static_cast<std::int64_t>(n); ++ni) {
        const std::size_t node = static_cast<std::size_t>(ni);
        std::vector<std::vector<double>> series(signals.size());
        series[0] = degree_increment_series(node, ug);
        series[1] = balance_increment_series(node, ug);
        const auto gaps = inter_event_times(node, ug);
        series[2].assign(gaps.begin(), gaps.end());
        series[3] = attractiveness_series(node, ug, seg, opts.attractiveness_window);
        double* row = m.values.data() + node * cols;
        for (std::size_t s = 0; s < signals.size(); ++s) {
            const SeriesSummary summary = summarize_series(series[s], opts.stats);
            for (std::size_t t = 0; t < n_stats; ++t)
                row[base_cols + s * n_stats + t] = summary.values[t];
            m.masks[node * signals.size() + s] = summary.present ? 1 : 0;
        }
    }
    return m;
}

FeatureMatrix assemble_dataset(const TxStore& store, const Segment& seg, int variant,
                               const EntityPartition* partition, const FeatureOptions& opts) {
    if (variant >= 2 && !partition)
        fail_usage("variants 2 and 3 require an entity partition");
    const UserGraph ug = build_user_graph(store, seg, variant == 1 ? nullptr : partition);
    return assemble_from_graph(ug, seg, variant, opts);
}

void write_feature_csv(const FeatureMatrix& m, std::ostream& out) {
    out << "entity_id";
    for (const std::string& name : m.names) out << ',' << name;
    for (const std::string& name : m.mask_names) out << ',' << name;
    out << '\n';
    const std::size_t cols = m.names.size();
    const std::size_t nmask = m.mask_names.size();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << m.entities[r];
        for (std::size_t c = 0; c < cols; ++c) out << ',' << format_double(m.values[r * cols + c]);
        for (std::size_t s = 0; s < nmask; ++s)
            out << ',' << (m.masks[r * nmask + s] ? '1' : '0');
        out << '\n';
    }
}

FeatureMatrix read_feature_csv(std::istream& in, Granularity g, std::uint32_t segment,
                               int variant) {
    FeatureMatrix m;
    m.granularity = g;
    m.segment = segment;
    m.variant = variant;
    std::string line;
    if (!std::getline(in, line)) fail_data("empty feature CSV");
    if (line.size() && line.back() == '\r') line.pop_back();
    std::stringstream hs(line);
    std::string field;
    std::vector<std::string> header;
    while (std::getline(hs, field, ',')) header.push_back(field);
    if (header.empty() || header[0] != "entity_id")
        fail_data("feature CSV must start with entity_id column");
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (header[i].rfind("has_", 0) == 0)
            m.mask_names.push_back(header[i]);
        else
            m.names.push_back(header[i]);
    }
    const std::size_t cols = m.names.size();
    const std::size_t nmask = m.mask_names.size();
    while (std::getline(in, line)) {
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::getline(ss, field, ',');
        m.entities.push_back(static_cast<std::uint32_t>(parse_i64(field, "entity_id")));
        for (std::size_t c = 0; c < cols; ++c) {
            if (!std::getline(ss, field, ',')) fail_data("feature CSV: short row");
            m.values.push_back(parse_double(field, m.names[c]));
        }
        for (std::size_t s = 0; s < nmask; ++s) {
            if (!std::getline(ss, field, ',')) fail_data("feature CSV: short row");
            m.masks.push_back(field == "1" ? 1 : 0);
        }
    }
    return m;
}

}  // namespace chainlens
