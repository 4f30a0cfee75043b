#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "chainlens/features.hpp"
#include "chainlens/synthgen.hpp"
#include "oracles.hpp"

using namespace chainlens;

namespace {

TxStore parse_str(const std::string& s) {
    std::istringstream in(s);
    return parse_transactions(in);
}

struct Fixture {
    TxStore store;
    std::vector<Segment> segments;
    EntityPartition partition;
};

Fixture make_fixture(std::uint32_t n_tx, std::uint64_t seed, std::uint32_t wallets) {
    WalletSpec spec;
    spec.wallets = wallets;
    spec.receive_reuse_prob = 0.55;
    spec.span_blocks = 26000;
    Fixture f{parse_str(generate_economy(spec, n_tx, seed).jsonl), {}, {}};
    f.segments = segment_store(f.store, Granularity::OneMonth);
    f.partition = cluster_entities(f.store, HeuristicConfig{})
                      .partition(occurring_addresses(f.store));
    return f;
}

double get(const FeatureMatrix& m, std::uint32_t entity, const std::string& name) {
    const std::size_t c = m.column(name);
    for (std::size_t r = 0; r < m.rows(); ++r)
        if (m.entities[r] == entity) return m.at(r, c);
    FAIL("entity not found");
    return 0;
}

}  // namespace

TEST_CASE("single incoming edge fills the balance features") {
    oracle::StoreBuilder b;
    b.tx(77, {{"A", 5}}, {{"B", 5}});
    const TxStore store = b.done();
    const auto segs = segment_store(store, Granularity::OneMonth);
    const UserGraph ug = build_user_graph(store, segs[0], nullptr);
    const FeatureMatrix m = non_temporal_features(ug, segs[0]);
    const AddressId bid = store.addresses().lookup("B");
    CHECK(get(m, bid, "in_degree") == 1);
    CHECK(get(m, bid, "unique_in_degree") == 1);
    CHECK(get(m, bid, "in_balance") == 5);
    CHECK(get(m, bid, "max_in_payment") == 5);
    CHECK(get(m, bid, "txn_sum") == 5);
    CHECK(get(m, bid, "first_txn_block") == 77);
    CHECK(get(m, bid, "last_txn_block") == 77);
    CHECK(get(m, bid, "active_span") == 0);
    CHECK(get(m, bid, "out_degree") == 0);
}

TEST_CASE("triangle has clustering coefficient one, star center zero") {
    oracle::StoreBuilder tri;
    tri.tx(1, {{"A", 2}}, {{"B", 1}})
        .tx(2, {{"B", 2}}, {{"C", 1}})
        .tx(3, {{"C", 2}}, {{"A", 1}});
    const TxStore ts = tri.done();
    const auto segs = segment_store(ts, Granularity::OneMonth);
    const FeatureMatrix m = non_temporal_features(build_user_graph(ts, segs[0], nullptr), segs[0]);
    for (const char* a : {"A", "B", "C"})
        CHECK(get(m, ts.addresses().lookup(a), "clustering_coefficient") == 1.0);

    oracle::StoreBuilder star;
    for (int i = 0; i < 5; ++i)
        star.tx(1 + i, {{"hub", 2}}, {{"leaf" + std::to_string(i), 1}});
    const TxStore ss = star.done();
    const auto segs2 = segment_store(ss, Granularity::OneMonth);
    const FeatureMatrix m2 =
        non_temporal_features(build_user_graph(ss, segs2[0], nullptr), segs2[0]);
    CHECK(get(m2, ss.addresses().lookup("hub"), "clustering_coefficient") == 0.0);
}

TEST_CASE("inter-event gaps come from sorted event heights") {
    oracle::StoreBuilder b;
    b.tx(100, {{"A", 9}}, {{"B", 1}})
        .tx(105, {{"A", 8}}, {{"B", 1}})
        .tx(112, {{"A", 7}}, {{"B", 1}});
    const TxStore store = b.done();
    const auto segs = segment_store(store, Granularity::OneMonth);
    const UserGraph ug = build_user_graph(store, segs[0], nullptr);
    const auto gaps = inter_event_times(ug.node_of(store.addresses().lookup("A")), ug);
    CHECK(gaps == std::vector<std::uint32_t>{5, 7});

    // single event: no gaps
    oracle::StoreBuilder one;
    one.tx(100, {{"A", 2}}, {{"B", 1}});
    const TxStore os = one.done();
    const auto osegs = segment_store(os, Granularity::OneMonth);
    const UserGraph oug = build_user_graph(os, osegs[0], nullptr);
    CHECK(inter_event_times(oug.node_of(os.addresses().lookup("A")), oug).empty());

    // two events in the same block: a zero gap
    oracle::StoreBuilder same;
    same.tx(100, {{"A", 9}}, {{"B", 1}}).tx(100, {{"A", 8}}, {{"C", 1}});
    const TxStore sstore = same.done();
    const auto ssegs = segment_store(sstore, Granularity::OneMonth);
    const UserGraph sug = build_user_graph(sstore, ssegs[0], nullptr);
    CHECK(inter_event_times(sug.node_of(sstore.addresses().lookup("A")), sug) ==
          std::vector<std::uint32_t>{0});
}

TEST_CASE("attractiveness follows the known-counterparty fraction") {
    // window 10: events at blocks 100-101 (window 0) and 110-111 (window 1)
    oracle::StoreBuilder b;
    b.tx(100, {{"A", 9}}, {{"B", 1}})
        .tx(101, {{"A", 8}}, {{"C", 1}})
        .tx(110, {{"A", 7}}, {{"B", 1}})
        .tx(111, {{"A", 6}}, {{"D", 1}});
    const TxStore store = b.done();
    const auto segs = segment_store(store, Granularity::OneMonth);
    const UserGraph ug = build_user_graph(store, segs[0], nullptr);
    const auto series =
        attractiveness_series(ug.node_of(store.addresses().lookup("A")), ug, segs[0], 10);
    REQUIRE(series.size() == 2);
    CHECK(series[0] == 0.0);  // first active window: nothing known yet
    CHECK(series[1] == doctest::Approx(0.5));

    // a counterparty repeated in every window converges to 1
    oracle::StoreBuilder rep;
    rep.tx(100, {{"A", 9}}, {{"B", 1}})
        .tx(110, {{"A", 8}}, {{"B", 1}})
        .tx(120, {{"A", 7}}, {{"B", 1}});
    const TxStore rs = rep.done();
    const auto rsegs = segment_store(rs, Granularity::OneMonth);
    const UserGraph rug = build_user_graph(rs, rsegs[0], nullptr);
    const auto rseries =
        attractiveness_series(rug.node_of(rs.addresses().lookup("A")), rug, rsegs[0], 10);
    CHECK(rseries == std::vector<double>{0.0, 1.0, 1.0});
}

TEST_CASE("series summarizer computes max, mean and population std") {
    SummaryStats stats;
    const std::vector<double> constant = {2, 2, 2};
    const SeriesSummary s = summarize_series(constant, stats);
    CHECK(s.present);
    CHECK(s.values == std::vector<double>{2, 2, 0});

    const SeriesSummary empty = summarize_series(std::vector<double>{}, stats);
    CHECK_FALSE(empty.present);
    CHECK(empty.values == std::vector<double>{0, 0, 0});

    DetRng rng(4);
    std::vector<double> series(100);
    for (double& v : series) v = rng.next_double() * 10;
    const SeriesSummary r = summarize_series(series, stats);
    double maxv = series[0], mean = 0;
    for (double v : series) {
        maxv = std::max(maxv, v);
        mean += v;
    }
    mean /= series.size();
    double var = 0;
    for (double v : series) var += (v - mean) * (v - mean);
    var /= series.size();
    CHECK(r.values[0] == doctest::Approx(maxv).epsilon(1e-12));
    CHECK(r.values[1] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(r.values[2] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("variant schemas line up") {
    const Fixture f = make_fixture(600, 41, 12);
    const Segment* seg = nullptr;
    for (const Segment& s : f.segments)
        if (!s.tx_ordinals.empty()) {
            seg = &s;
            break;
        }
    REQUIRE(seg);
    const FeatureOptions opts;
    const FeatureMatrix v2 = assemble_dataset(f.store, *seg, 2, &f.partition, opts);
    const FeatureMatrix v3 = assemble_dataset(f.store, *seg, 3, &f.partition, opts);
    CHECK(v3.names.size() == v2.names.size() + 12);
    CHECK(v3.mask_names.size() == 4);

    // the non-temporal prefix of every variant-3 row equals its variant-2 row
    REQUIRE(v2.entities == v3.entities);
    for (std::size_t r = 0; r < v2.rows(); ++r)
        for (std::size_t c = 0; c < v2.cols(); ++c) CHECK(v2.at(r, c) == v3.at(r, c));

    // identity partition makes variants 1 and 2 identical
    EntityPartition identity;
    identity.entity_of.resize(f.store.addresses().size());
    for (AddressId a = 0; a < identity.entity_of.size(); ++a) identity.entity_of[a] = a;
    const FeatureMatrix v1 = assemble_dataset(f.store, *seg, 1, nullptr, opts);
    const FeatureMatrix v2i = assemble_dataset(f.store, *seg, 2, &identity, opts);
    CHECK(v1.names == v2i.names);
    CHECK(v1.entities == v2i.entities);
    CHECK(v1.values == v2i.values);

    CHECK_THROWS_AS(assemble_dataset(f.store, *seg, 2, nullptr, opts), Error);
}

TEST_CASE("features match the naive recomputation on a synthetic fixture") {
    const Fixture f = make_fixture(1500, 42, 25);
    const FeatureOptions opts;
    for (const Segment& seg : f.segments) {
        const UserGraph ug = build_user_graph(f.store, seg, &f.partition);
        const FeatureMatrix m = assemble_from_graph(ug, seg, 2, opts);
        const auto naive = oracle::naive_features(ug);
        REQUIRE(m.rows() == naive.size());
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const auto& expect = naive.at(m.entities[r]).values;
            for (std::size_t c = 0; c < m.names.size(); ++c) {
                INFO(m.names[c]);
                const double got = m.at(r, c);
                const double want = expect.at(m.names[c]);
                if (m.names[c] == "clustering_coefficient")
                    CHECK(got == doctest::Approx(want).epsilon(1e-12));
                else
                    CHECK(got == want);
            }
        }
        // temporal series against their naive versions
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const std::size_t node = ug.node_of(m.entities[r]);
            CHECK(inter_event_times(node, ug) ==
                  oracle::naive_inter_event(m.entities[r], ug));
            const auto mine = attractiveness_series(node, ug, seg, opts.attractiveness_window);
            const auto want = oracle::naive_attractiveness(m.entities[r], ug,
                                                           opts.attractiveness_window);
            REQUIRE(mine.size() == want.size());
            for (std::size_t i = 0; i < mine.size(); ++i)
                CHECK(mine[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("feature invariants hold on a fixture") {
    const Fixture f = make_fixture(1000, 43, 18);
    const FeatureOptions opts;
    for (const Segment& seg : f.segments) {
        const UserGraph ug = build_user_graph(f.store, seg, &f.partition);
        const FeatureMatrix m = assemble_from_graph(ug, seg, 3, opts);
        double in_sum = 0, out_sum = 0;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const double in_deg = m.at(r, m.column("in_degree"));
            const double out_deg = m.at(r, m.column("out_degree"));
            CHECK(m.at(r, m.column("unique_in_degree")) <= in_deg);
            CHECK(m.at(r, m.column("unique_out_degree")) <= out_deg);
            CHECK(m.at(r, m.column("total_degree")) == in_deg + out_deg);
            const double cc = m.at(r, m.column("clustering_coefficient"));
            CHECK(cc >= 0.0);
            CHECK(cc <= 1.0);
            CHECK(m.at(r, m.column("in_balance")) - m.at(r, m.column("out_balance")) ==
                  m.at(r, m.column("txn_sum")));
            const double att_max = m.at(r, m.column("attractiveness_max"));
            CHECK(att_max >= 0.0);
            CHECK(att_max <= 1.0);
            in_sum += in_deg;
            out_sum += out_deg;
        }
        CHECK(in_sum == static_cast<double>(ug.edges.size()));
        CHECK(out_sum == static_cast<double>(ug.edges.size()));
    }
}

TEST_CASE("feature csv round-trips") {
    const Fixture f = make_fixture(500, 44, 10);
    const FeatureOptions opts;
    const Segment* seg = nullptr;
    for (const Segment& s : f.segments)
        if (!s.tx_ordinals.empty()) seg = &s;
    REQUIRE(seg);
    const FeatureMatrix m = assemble_dataset(f.store, *seg, 3, &f.partition, opts);
    std::ostringstream csv;
    write_feature_csv(m, csv);
    std::istringstream in(csv.str());
    const FeatureMatrix back = read_feature_csv(in, m.granularity, m.segment, m.variant);
    CHECK(back.names == m.names);
    CHECK(back.mask_names == m.mask_names);
    CHECK(back.entities == m.entities);
    CHECK(back.values == m.values);
    CHECK(back.masks == m.masks);
}

TEST_CASE("summary stat sets are validated and configurable") {
    SummaryStats mean_only;
    mean_only.stats = {"mean"};
    const SeriesSummary s = summarize_series(std::vector<double>{1, 2, 3}, mean_only);
    CHECK(s.values == std::vector<double>{2.0});

    SummaryStats bad;
    bad.stats = {"median"};
    CHECK_THROWS_AS(summarize_series(std::vector<double>{1.0}, bad), Error);
    SummaryStats empty;
    empty.stats = {};
    CHECK_THROWS_AS(summarize_series(std::vector<double>{1.0}, empty), Error);
}
