#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
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

// every input must consume a previously created, still unspent output with
// the same address and value
void check_utxo_consistency(const TxStore& store) {
    std::map<std::pair<AddressId, std::uint64_t>, std::int64_t> open;
    for (const TxRecord& tx : store.txs()) {
        for (const TxIo& io : tx.inputs) {
            auto it = open.find({io.addr, io.sats});
            REQUIRE_MESSAGE(it != open.end(), "input spends a nonexistent output");
            REQUIRE_MESSAGE(it->second > 0, "input double-spends an output");
            --it->second;
        }
        for (const TxIo& io : tx.outputs) ++open[{io.addr, io.sats}];
    }
}

std::vector<std::uint32_t> truth_vector(const TxStore& store, const GroundTruth& truth,
                                        const EntityPartition& p,
                                        std::vector<std::uint32_t>& predicted) {
    std::vector<std::uint32_t> wallets;
    for (const auto& [addr, wallet] : truth.wallet_of) {
        const AddressId id = store.addresses().lookup(addr);
        wallets.push_back(wallet);
        predicted.push_back(p.entity(id));
    }
    return wallets;
}

}  // namespace

TEST_CASE("replay is byte-identical") {
    WalletSpec spec;
    spec.wallets = 20;
    spec.receive_reuse_prob = 0.4;
    const SynthEconomy a = generate_economy(spec, 800, 99);
    const SynthEconomy b = generate_economy(spec, 800, 99);
    CHECK(a.jsonl == b.jsonl);
    const SynthEconomy c = generate_economy(spec, 800, 100);
    CHECK(a.jsonl != c.jsonl);
}

TEST_CASE("generated economies are UTXO-consistent and hit the tx budget") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        WalletSpec spec;
        spec.wallets = 25;
        spec.receive_reuse_prob = 0.5;
        spec.self_change_prob = 0.1;
        spec.fresh_change_prob = 0.8;
        spec.reuse_prob = 0.1;
        const SynthEconomy economy = generate_economy(spec, 1200, seed);
        const TxStore store = parse_str(economy.jsonl);
        CHECK(store.txs().size() == 1200);
        check_utxo_consistency(store);
        // ground truth covers every address
        for (AddressId a = 0; a < store.addresses().size(); ++a)
            CHECK(economy.truth.wallet_of.count(store.addresses().name(a)) == 1);
    }
}

TEST_CASE("single-wallet minimal economy: one coinbase plus one spend with change") {
    WalletSpec spec;
    spec.wallets = 1;
    spec.final_sweep = false;
    const SynthEconomy economy = generate_economy(spec, 2, 7);
    const TxStore store = parse_str(economy.jsonl);
    REQUIRE(store.txs().size() == 2);
    CHECK(store.txs()[0].coinbase);
    CHECK_FALSE(store.txs()[1].coinbase);
    REQUIRE(store.txs()[1].outputs.size() == 2);
    // the recorded change output belongs to the wallet
    const auto it = economy.truth.change_of.find(store.txs()[1].txid);
    REQUIRE(it != economy.truth.change_of.end());
    CHECK(economy.truth.wallet_of.at(it->second) == 0);
}

TEST_CASE("fresh-change policy makes every change output a first appearance") {
    WalletSpec spec;
    spec.wallets = 10;
    spec.fresh_change_prob = 1.0;
    spec.reuse_prob = 0.0;
    spec.self_change_prob = 0.0;
    const SynthEconomy economy = generate_economy(spec, 400, 13);
    const TxStore store = parse_str(economy.jsonl);
    std::map<std::string, std::uint32_t> ordinal_of;
    for (std::uint32_t t = 0; t < store.txs().size(); ++t)
        ordinal_of[store.txs()[t].txid] = t;
    for (const auto& [txid, change] : economy.truth.change_of) {
        const AddressId a = store.addresses().lookup(change);
        CHECK(store.stats(a).first_ordinal == ordinal_of.at(txid));
    }
}

TEST_CASE("infeasible budgets are rejected") {
    WalletSpec spec;
    spec.wallets = 100;
    CHECK_THROWS_WITH_AS(generate_economy(spec, 5, 1), doctest::Contains("infeasible"), Error);
}

TEST_CASE("compliant regime recovers the wallet partition exactly") {
    WalletSpec spec;
    spec.wallets = 40;
    spec.receive_reuse_prob = 1.0;
    spec.double_fund = true;
    const SynthEconomy economy = generate_economy(spec, 3000, 1234);
    const TxStore store = parse_str(economy.jsonl);
    const EntityPartition p = cluster_entities(filter_analyzable(store), HeuristicConfig{})
                                  .partition(occurring_addresses(store));
    const ClusteringMetrics m = evaluate_clustering(p, store.addresses(), economy.truth);
    CHECK(m.pairwise_precision == 1.0);
    CHECK(m.pairwise_recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.adjusted_rand_index == 1.0);
}

TEST_CASE("adversarial reuse can only hurt precision, and the change heuristic only helps recall") {
    WalletSpec spec;
    spec.wallets = 30;
    spec.receive_reuse_prob = 0.6;
    spec.fresh_change_prob = 0.55;
    spec.reuse_prob = 0.35;
    spec.self_change_prob = 0.1;
    const SynthEconomy economy = generate_economy(spec, 2500, 555);
    const TxStore store = parse_str(economy.jsonl);

    HeuristicConfig multi_only;
    multi_only.change_address = false;
    const auto occurring = occurring_addresses(store);
    const EntityPartition p_multi =
        cluster_entities(store, multi_only).partition(occurring);
    const EntityPartition p_full = cluster_entities(store, HeuristicConfig{}).partition(occurring);
    const ClusteringMetrics m_multi = evaluate_clustering(p_multi, store.addresses(), economy.truth);
    const ClusteringMetrics m_full = evaluate_clustering(p_full, store.addresses(), economy.truth);
    CHECK(m_multi.pairwise_recall <= m_full.pairwise_recall);
    CHECK(m_multi.pairwise_precision == 1.0);  // co-spends never cross wallets here
}

TEST_CASE("clustering metrics match the quadratic oracle") {
    WalletSpec spec;
    spec.wallets = 12;
    spec.fresh_change_prob = 0.6;
    spec.reuse_prob = 0.3;
    const SynthEconomy economy = generate_economy(spec, 400, 88);
    const TxStore store = parse_str(economy.jsonl);
    const EntityPartition p = cluster_entities(store, HeuristicConfig{})
                                  .partition(occurring_addresses(store));
    std::vector<std::uint32_t> predicted;
    const std::vector<std::uint32_t> truth = truth_vector(store, economy.truth, p, predicted);
    const oracle::PairMetrics want = oracle::quadratic_pair_metrics(predicted, truth);
    const ClusteringMetrics got = evaluate_clustering(p, store.addresses(), economy.truth);
    CHECK(got.pairwise_precision == doctest::Approx(want.precision).epsilon(1e-12));
    CHECK(got.pairwise_recall == doctest::Approx(want.recall).epsilon(1e-12));
    CHECK(got.adjusted_rand_index == doctest::Approx(want.ari).epsilon(1e-12));
}

TEST_CASE("all-singleton prediction has zero recall against multi-address wallets") {
    WalletSpec spec;
    spec.wallets = 5;
    const SynthEconomy economy = generate_economy(spec, 100, 3);
    const TxStore store = parse_str(economy.jsonl);
    EntityPartition singletons;
    singletons.entity_of.resize(store.addresses().size());
    for (AddressId a = 0; a < singletons.entity_of.size(); ++a) singletons.entity_of[a] = a;
    const ClusteringMetrics m = evaluate_clustering(singletons, store.addresses(), economy.truth);
    CHECK(m.pairwise_recall == 0.0);
    CHECK(m.pairwise_precision == 1.0);  // vacuous: no predicted pairs

    // identical partitions score perfectly
    const ClusteringMetrics perfect = [&] {
        EntityPartition truth_p;
        truth_p.entity_of.resize(store.addresses().size());
        for (AddressId a = 0; a < truth_p.entity_of.size(); ++a)
            truth_p.entity_of[a] =
                economy.truth.wallet_of.at(store.addresses().name(a));
        return evaluate_clustering(truth_p, store.addresses(), economy.truth);
    }();
    CHECK(perfect.pairwise_precision == 1.0);
    CHECK(perfect.pairwise_recall == 1.0);
    CHECK(perfect.adjusted_rand_index == 1.0);
}

TEST_CASE("coverage gaps are reported") {
    WalletSpec spec;
    spec.wallets = 3;
    const SynthEconomy economy = generate_economy(spec, 30, 4);
    const TxStore store = parse_str(economy.jsonl);
    GroundTruth truth = economy.truth;
    truth.wallet_of.emplace("never-seen-address", 0);
    EntityPartition p;
    p.entity_of.resize(store.addresses().size());
    CHECK_THROWS_WITH_AS(evaluate_clustering(p, store.addresses(), truth),
                         doctest::Contains("never-seen-address"), Error);
}

TEST_CASE("planted clones mirror their malicious twins feature for feature") {
    WalletSpec spec;
    spec.wallets = 30;
    spec.planted_clones = 5;
    spec.span_blocks = 26000;
    spec.receive_reuse_prob = 1.0;
    spec.double_fund = true;
    const SynthEconomy economy = generate_economy(spec, 3000, 2024);
    const TxStore store = parse_str(economy.jsonl);
    check_utxo_consistency(store);

    // twins are labeled, clones are not
    std::size_t malicious_wallets = 0, planted_wallets = 0;
    for (std::size_t w = 0; w < economy.truth.wallet_malicious.size(); ++w) {
        malicious_wallets += economy.truth.wallet_malicious[w];
        planted_wallets += economy.truth.wallet_planted[w];
        CHECK(!(economy.truth.wallet_malicious[w] && economy.truth.wallet_planted[w]));
    }
    CHECK(malicious_wallets == 5);
    CHECK(planted_wallets == 5);

    // clustering recovers wallets exactly, then twin and clone entities carry
    // identical feature rows in every segment
    const EntityPartition p = cluster_entities(filter_analyzable(store), HeuristicConfig{})
                                  .partition(occurring_addresses(store));
    const ClusteringMetrics cm = evaluate_clustering(p, store.addresses(), economy.truth);
    REQUIRE(cm.pairwise_precision == 1.0);
    REQUIRE(cm.pairwise_recall == 1.0);

    // map wallet -> entity id via any member address
    std::map<std::uint32_t, std::uint32_t> entity_of_wallet;
    for (const auto& [addr, wallet] : economy.truth.wallet_of)
        entity_of_wallet[wallet] = p.entity(store.addresses().lookup(addr));

    std::vector<std::uint32_t> twin_entities, clone_entities;
    for (std::size_t w = 0; w < economy.truth.wallet_malicious.size(); ++w) {
        if (economy.truth.wallet_malicious[w]) twin_entities.push_back(entity_of_wallet[w]);
        if (economy.truth.wallet_planted[w]) clone_entities.push_back(entity_of_wallet[w]);
    }
    REQUIRE(twin_entities.size() == clone_entities.size());

    const FeatureOptions opts;
    for (const Segment& seg : segment_store(store, Granularity::OneMonth)) {
        const FeatureMatrix m = assemble_dataset(store, seg, 3, &p, opts);
        auto row_of = [&](std::uint32_t entity) -> const double* {
            for (std::size_t r = 0; r < m.rows(); ++r)
                if (m.entities[r] == entity) return m.values.data() + r * m.cols();
            return nullptr;
        };
        for (std::size_t i = 0; i < twin_entities.size(); ++i) {
            const double* twin = row_of(twin_entities[i]);
            const double* clone = row_of(clone_entities[i]);
            CHECK((twin == nullptr) == (clone == nullptr));  // same activity footprint
            if (!twin || !clone) continue;
            for (std::size_t c = 0; c < m.cols(); ++c) {
                INFO(m.names[c]);
                CHECK(twin[c] == clone[c]);
            }
        }
    }
}
