#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "chainlens/entities.hpp"
#include "chainlens/txstore.hpp"

namespace chainlens {

// Knobs for the synthetic economy. Change disposition per spend: fresh own
// address, self-change to an input address, or reuse of an existing own
// address; the three probabilities must sum to at most 1 (remainder falls
// back to fresh).
struct WalletSpec {
    std::uint32_t wallets = 50;
    double malicious_fraction = 0.1;

    double fresh_change_prob = 1.0;
    double self_change_prob = 0.0;
    double reuse_prob = 0.0;
    double receive_reuse_prob = 0.6;  // receiver takes payment on an existing address

    double activity_rate = 0.25;  // expected spends per block
    double value_mu = 11.0;       // lognormal payment sizes, in satoshis
    double value_sigma = 1.0;

    double malicious_in_mult = 5.0;      // receive-selection weight
    double malicious_value_mult = 10.0;  // payment-size multiplier
    double malicious_span_quantile = 0.3;

    bool sweep_inputs = true;  // spends consume every wallet UTXO
    bool final_sweep = true;   // one consolidation per wallet at the end
    // Funds every wallet twice up front so first payments into a wallet's
    // funding address never hit the one-receipt no-change guard. Required for
    // exact recovery together with receive_reuse_prob = 1.
    bool double_fund = false;

    std::uint32_t planted_clones = 0;  // unlabeled behavioral twins of malicious wallets

    std::int64_t start_time = 1577836800;  // 2020-01-01T00:00:00Z
    std::uint32_t block_interval = 600;
    std::uint32_t span_blocks = 0;  // 0: derived from txs and activity_rate
};

WalletSpec load_wallet_spec(const std::string& path);

struct GroundTruth {
    std::unordered_map<std::string, std::uint32_t> wallet_of;  // address -> wallet
    std::vector<std::uint8_t> wallet_malicious;                // per wallet
    std::vector<std::uint8_t> wallet_planted;
    std::unordered_map<std::string, std::string> change_of;  // txid -> change address
    std::uint32_t n_primary_wallets = 0;  // background + malicious + clones (not one-off peers)
};

struct SynthEconomy {
    std::string jsonl;  // canonical transaction lines
    GroundTruth truth;
};

// Deterministic for a given (spec, seed, n_tx); inputs always spend
// previously created outputs.
SynthEconomy generate_economy(const WalletSpec& spec, std::uint32_t n_tx, std::uint64_t seed);

struct ClusteringMetrics {
    double pairwise_precision = 0;
    double pairwise_recall = 0;
    double f1 = 0;
    double adjusted_rand_index = 0;
};

// Pair-counting metrics of a predicted partition against wallet ground
// truth, over the truth's addresses.
ClusteringMetrics evaluate_clustering(const EntityPartition& predicted, const AddressTable& table,
                                      const GroundTruth& truth);

void write_truth_csv(const GroundTruth& truth, std::ostream& out);
void write_changes_csv(const GroundTruth& truth, std::ostream& out);
void write_labels_csv(const GroundTruth& truth, std::ostream& out);

}  // namespace chainlens
