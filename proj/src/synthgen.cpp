#include "chainlens/synthgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace chainlens {

namespace {

struct Utxo {
    std::string addr;
    std::uint64_t sats;
};

struct Wallet {
    std::uint32_t id = 0;
    bool malicious = false;
    bool planted = false;
    bool organic = true;  // participates in background activity
    std::uint32_t active_until = UINT32_MAX;
    std::vector<std::string> addresses;
    std::vector<Utxo> utxos;
    std::uint32_t next_addr = 0;

    std::uint64_t balance() const {
        std::uint64_t b = 0;
        for (const Utxo& u : utxos) b += u.sats;
        return b;
    }
};

struct PlantedTask {
    enum Kind { FundExchange, FundFunder, FunderPays, SweepSend, Consolidate } kind;
    std::uint32_t wallet;  // twin or clone
    std::uint32_t funder = 0;
    std::uint64_t value = 0;
};

class EconomyBuilder {
public:
    EconomyBuilder(const WalletSpec& spec, std::uint32_t n_tx, std::uint64_t seed)
        : spec_(spec), n_tx_(n_tx), rng_(seed) {}

    SynthEconomy build();

private:
    Wallet& new_wallet(bool malicious, bool planted, bool organic) {
        Wallet w;
        w.id = static_cast<std::uint32_t>(wallets_.size());
        w.malicious = malicious;
        w.planted = planted;
        w.organic = organic;
        wallets_.push_back(std::move(w));
        truth_.wallet_malicious.push_back(malicious);
        truth_.wallet_planted.push_back(planted);
        return wallets_.back();
    }

    std::string fresh_address(Wallet& w) {
        std::string a = "w" + std::to_string(w.id) + "a" + std::to_string(w.next_addr++);
        w.addresses.push_back(a);
        truth_.wallet_of.emplace(a, w.id);
        return a;
    }

    std::string next_txid() {
        const std::uint64_t c = txid_counter_++;
        DetRng h(c * 0x9e3779b97f4a7c15ULL + 1);
        return to_hex(c) + to_hex(h.next_u64()) + to_hex(h.next_u64()) + to_hex(h.next_u64());
    }

    struct IoS {
        std::string addr;
        std::uint64_t sats;
    };

    std::string emit_tx(std::uint32_t height, bool coinbase, const std::vector<IoS>& ins,
                        const std::vector<IoS>& outs) {
        const std::string txid = next_txid();
        out_ += "{\"txid\":\"" + txid + "\",\"height\":" + format_u64(height) +
                ",\"time\":" + format_i64(spec_.start_time +
                                          static_cast<std::int64_t>(height) *
                                              spec_.block_interval) +
                ",\"coinbase\":" + (coinbase ? "true" : "false") +
                ",\"op_return\":false,\"script_hash_only\":false,\"inputs\":[";
        for (std::size_t i = 0; i < ins.size(); ++i) {
            if (i) out_ += ',';
            out_ += "{\"addr\":\"" + ins[i].addr + "\",\"sats\":" + format_u64(ins[i].sats) + "}";
        }
        out_ += "],\"outputs\":[";
        for (std::size_t i = 0; i < outs.size(); ++i) {
            if (i) out_ += ',';
            out_ += "{\"addr\":\"" + outs[i].addr + "\",\"sats\":" + format_u64(outs[i].sats) + "}";
        }
        out_ += "]}\n";
        ++emitted_;
        record_receipts(outs);
        return txid;
    }

    std::uint64_t draw_payment(bool malicious_side) {
        const double v = std::exp(spec_.value_mu + spec_.value_sigma * rng_.next_normal());
        double scaled = v * (malicious_side ? spec_.malicious_value_mult : 1.0);
        scaled = std::min(scaled, 9.0e15);
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(scaled)));
    }

    // spend helper: consumes utxos of `sender`, pays `receiver`, handles the
    // change disposition knobs; returns false when the sender cannot pay.
    bool spend(Wallet& sender, Wallet& receiver, std::uint32_t height);

    void run_sweep(Wallet& w, std::uint32_t height) {
        if (w.utxos.empty()) return;
        std::vector<IoS> ins;
        std::uint64_t total = 0;
        for (const Utxo& u : w.utxos) {
            ins.push_back({u.addr, u.sats});
            total += u.sats;
        }
        w.utxos.clear();
        const std::string change = fresh_address(w);
        const std::string txid = emit_tx(height, false, ins, {{change, total}});
        truth_.change_of.emplace(txid, change);
        w.utxos.push_back({change, total});
    }

    // one receipt per transaction per address, matching the occurrence index
    void record_receipts(const std::vector<IoS>& outs) {
        std::vector<std::string> seen;
        for (const IoS& o : outs) {
            if (std::find(seen.begin(), seen.end(), o.addr) != seen.end()) continue;
            seen.push_back(o.addr);
            ++receipts_[o.addr];
        }
    }

    const WalletSpec& spec_;
    std::uint32_t n_tx_;
    DetRng rng_;
    std::deque<Wallet> wallets_;  // deque: references stay valid while wallets are added
    GroundTruth truth_;
    std::string out_;
    std::uint64_t txid_counter_ = 0;
    std::uint32_t emitted_ = 0;
    std::unordered_map<std::string, std::uint32_t> receipts_;
};

bool EconomyBuilder::spend(Wallet& sender, Wallet& receiver, std::uint32_t height) {
    const std::uint64_t balance = sender.balance();
    if (balance < 2) return false;

    const bool malicious_side = sender.malicious || receiver.malicious;
    std::uint64_t payment = draw_payment(malicious_side);
    payment = std::min(payment, balance - 1);  // change stays >= 1

    std::vector<IoS> ins;
    std::uint64_t in_total = 0;
    if (spec_.sweep_inputs) {
        for (const Utxo& u : sender.utxos) {
            ins.push_back({u.addr, u.sats});
            in_total += u.sats;
        }
        sender.utxos.clear();
    } else {
        while (in_total < payment + 1 && !sender.utxos.empty()) {
            const Utxo u = sender.utxos.front();
            sender.utxos.erase(sender.utxos.begin());
            ins.push_back({u.addr, u.sats});
            in_total += u.sats;
        }
        if (in_total < payment + 1) {  // partial selection failed; undo
            for (const IoS& i : ins) sender.utxos.push_back({i.addr, i.sats});
            return false;
        }
    }

    // receiver address: reuse an existing one or take a fresh one. Reuse
    // prefers addresses with two or more receipts so the payment side never
    // trips the one-receipt no-change guard.
    std::string pay_addr;
    if (!receiver.addresses.empty() && rng_.next_double() < spec_.receive_reuse_prob) {
        std::vector<const std::string*> settled;
        for (const std::string& a : receiver.addresses)
            if (receipts_[a] >= 2) settled.push_back(&a);
        if (!settled.empty())
            pay_addr = *settled[rng_.next_below(settled.size())];
        else
            pay_addr = receiver.addresses[rng_.next_below(receiver.addresses.size())];
    } else {
        pay_addr = fresh_address(receiver);
    }

    // change disposition
    const std::uint64_t change_val = in_total - payment;
    const double u = rng_.next_double();
    std::string change_addr;
    if (u < spec_.fresh_change_prob) {
        change_addr = fresh_address(sender);
    } else if (u < spec_.fresh_change_prob + spec_.self_change_prob) {
        change_addr = ins[0].addr;
    } else if (u < spec_.fresh_change_prob + spec_.self_change_prob + spec_.reuse_prob &&
               !sender.addresses.empty()) {
        change_addr = sender.addresses[rng_.next_below(sender.addresses.size())];
    } else {
        change_addr = fresh_address(sender);
    }

    const std::string txid =
        emit_tx(height, false, ins, {{pay_addr, payment}, {change_addr, change_val}});
    truth_.change_of.emplace(txid, change_addr);
    receiver.utxos.push_back({pay_addr, payment});
    sender.utxos.push_back({change_addr, change_val});
    return true;
}

SynthEconomy EconomyBuilder::build() {
    if (n_tx_ < 1) fail_usage("economy needs at least one transaction");
    if (spec_.wallets < 1) fail_usage("economy needs at least one wallet");
    if (spec_.fresh_change_prob + spec_.self_change_prob + spec_.reuse_prob > 1.0 + 1e-12)
        fail_usage("change disposition probabilities exceed 1");
    if (spec_.activity_rate <= 0.0) fail_usage("activity_rate must be positive");

    const std::uint32_t n_background = spec_.wallets;
    const std::uint32_t n_twins = spec_.planted_clones;
    const std::uint32_t n_malicious_organic =
        n_twins > 0 ? 0
                    : std::min<std::uint32_t>(
                          n_background,
                          static_cast<std::uint32_t>(std::llround(
                              spec_.malicious_fraction * static_cast<double>(n_background))));

    for (std::uint32_t i = 0; i < n_background; ++i)
        new_wallet(/*malicious=*/i < n_malicious_organic, false, true);
    std::vector<std::uint32_t> twin_ids, clone_ids;
    for (std::uint32_t i = 0; i < n_twins; ++i)
        twin_ids.push_back(new_wallet(true, false, false).id);
    for (std::uint32_t i = 0; i < n_twins; ++i)
        clone_ids.push_back(new_wallet(false, true, false).id);
    truth_.n_primary_wallets = static_cast<std::uint32_t>(wallets_.size());

    const std::uint32_t funding_rounds = spec_.double_fund ? 2 : 1;
    const std::uint32_t warmup = funding_rounds * ((n_background + 7) / 8);
    std::uint32_t span = spec_.span_blocks;
    if (span == 0)
        span = warmup + 4 +
               static_cast<std::uint32_t>(std::ceil(static_cast<double>(n_tx_) /
                                                    spec_.activity_rate));
    if (span <= warmup + 2) fail_usage("span_blocks too small for the warmup phase");

    // malicious organic wallets stop early
    const std::uint32_t active_cut =
        warmup + static_cast<std::uint32_t>(spec_.malicious_span_quantile *
                                            static_cast<double>(span - warmup));
    for (Wallet& w : wallets_)
        if (w.malicious && w.organic) w.active_until = active_cut;

    // planted schedule, shared verbatim by every twin and clone
    std::map<std::uint32_t, std::vector<PlantedTask>> planted;
    std::uint32_t planted_tx_budget = 0;
    std::uint32_t exchange_id = 0;
    if (n_twins > 0) {
        const std::uint32_t phases = 6;
        const std::uint32_t first = warmup + 4;
        const std::uint32_t last = span - 3;
        if (last < first + phases * 8) fail_usage("span too small for the planted schedule");
        const std::uint32_t phase_len = (last - first) / phases;
        std::vector<std::uint32_t> all = twin_ids;
        all.insert(all.end(), clone_ids.begin(), clone_ids.end());
        // a shared exchange-style sink, funded twice so payments into it never
        // trip the one-receipt guard
        exchange_id = new_wallet(false, false, false).id;
        planted[warmup + 1].push_back({PlantedTask::FundExchange, exchange_id, 0, 0});
        planted[warmup + 2].push_back({PlantedTask::FundExchange, exchange_id, 0, 0});
        planted_tx_budget += 2;
        for (std::uint32_t p = 0; p < phases; ++p) {
            const std::uint32_t base = first + p * phase_len;
            const std::uint32_t recv_off[3] = {phase_len / 8, phase_len / 3, phase_len / 2};
            for (std::uint32_t w : all) {
                for (int i = 0; i < 3; ++i) {
                    const std::uint64_t v = 5'000'000'000ULL + p * 100'000'000ULL +
                                            static_cast<std::uint64_t>(i) * 10'000'000ULL;
                    Wallet& funder = new_wallet(false, false, false);
                    planted[base + recv_off[i]].push_back(
                        {PlantedTask::FundFunder, w, funder.id, v + 1000});
                    planted[base + recv_off[i] + 1].push_back(
                        {PlantedTask::FunderPays, w, funder.id, v});
                    planted_tx_budget += 2;
                }
                planted[base + (2 * phase_len) / 3].push_back({PlantedTask::SweepSend, w, 0, 0});
                planted_tx_budget += 1;
            }
        }
        for (std::uint32_t w : all) {
            planted[span - 2].push_back({PlantedTask::Consolidate, w, 0, 0});
            planted_tx_budget += 1;
        }
    }

    std::uint32_t sweep_budget = 0;
    if (spec_.final_sweep)
        for (const Wallet& w : wallets_)
            if (w.organic) ++sweep_budget;

    if (n_tx_ < warmup + planted_tx_budget + sweep_budget + (n_tx_ > 1 ? 0u : 0u))
        fail_usage("infeasible spec: transaction budget " + std::to_string(n_tx_) +
                   " cannot cover " + std::to_string(warmup) + " funding + " +
                   std::to_string(planted_tx_budget) + " planted + " +
                   std::to_string(sweep_budget) + " sweep transactions");
    const std::uint32_t organic_budget = n_tx_ - warmup - planted_tx_budget - sweep_budget;
    const double rate = static_cast<double>(organic_budget) /
                        static_cast<double>(span - warmup - 2);

    std::uint32_t organic_left = organic_budget;
    double quota = 0.0;
    std::uint32_t funded = 0;

    for (std::uint32_t h = 1; h <= span; ++h) {
        // warmup: one coinbase per block funds up to 8 wallets; a second round
        // re-funds the same addresses when double_fund is set
        if (h <= warmup) {
            std::vector<IoS> outs;
            std::vector<std::uint32_t> targets;
            for (int i = 0; i < 8 && funded < funding_rounds * n_background; ++i, ++funded) {
                Wallet& w = wallets_[funded % n_background];
                const std::string addr =
                    funded < n_background ? fresh_address(w) : w.addresses.front();
                outs.push_back({addr, 2'000'000'000ULL + rng_.next_below(2'000'000'000ULL)});
                targets.push_back(w.id);
            }
            if (!outs.empty()) {
                emit_tx(h, true, {}, outs);
                for (std::size_t i = 0; i < outs.size(); ++i)
                    wallets_[targets[i]].utxos.push_back({outs[i].addr, outs[i].sats});
            }
        }

        if (auto it = planted.find(h); it != planted.end()) {
            for (const PlantedTask& task : it->second) {
                Wallet& w = wallets_[task.wallet];
                switch (task.kind) {
                    case PlantedTask::FundExchange: {
                        Wallet& ex = wallets_[task.wallet];
                        const std::string a =
                            ex.addresses.empty() ? fresh_address(ex) : ex.addresses.front();
                        const std::uint64_t v = 1'000'000'000'000ULL;
                        emit_tx(h, true, {}, {{a, v}});
                        ex.utxos.push_back({a, v});
                        break;
                    }
                    case PlantedTask::FundFunder: {
                        Wallet& f = wallets_[task.funder];
                        const std::string a = fresh_address(f);
                        emit_tx(h, true, {}, {{a, task.value}});
                        f.utxos.push_back({a, task.value});
                        break;
                    }
                    case PlantedTask::FunderPays: {
                        // change returns to the funding address: a self-change
                        // transaction, so no change detection can misfire on the
                        // twin's fresh receiving address
                        Wallet& f = wallets_[task.funder];
                        const Utxo u = f.utxos.back();
                        f.utxos.pop_back();
                        const std::string pay = fresh_address(w);
                        const std::string txid =
                            emit_tx(h, false, {{u.addr, u.sats}},
                                    {{pay, task.value}, {u.addr, u.sats - task.value}});
                        truth_.change_of.emplace(txid, u.addr);
                        w.utxos.push_back({pay, task.value});
                        f.utxos.push_back({u.addr, u.sats - task.value});
                        break;
                    }
                    case PlantedTask::SweepSend: {
                        std::vector<IoS> ins;
                        std::uint64_t total = 0;
                        for (const Utxo& u : w.utxos) {
                            ins.push_back({u.addr, u.sats});
                            total += u.sats;
                        }
                        w.utxos.clear();
                        Wallet& ex = wallets_[exchange_id];
                        const std::string pay = ex.addresses.front();
                        const std::string change = fresh_address(w);
                        const std::string txid = emit_tx(
                            h, false, ins, {{pay, total - 1000}, {change, 1000}});
                        truth_.change_of.emplace(txid, change);
                        ex.utxos.push_back({pay, total - 1000});
                        w.utxos.push_back({change, 1000});
                        break;
                    }
                    case PlantedTask::Consolidate: run_sweep(w, h); break;
                }
            }
        }

        if (h > warmup && h <= span - 2) {
            quota += rate;
            if (h == span - 2) quota = static_cast<double>(organic_left);
            while (quota >= 1.0 && organic_left > 0) {
                quota -= 1.0;
                // sender: any organic wallet that can pay and is still active
                std::vector<std::uint32_t> eligible;
                for (const Wallet& w : wallets_)
                    if (w.organic && h <= w.active_until && w.balance() >= 2)
                        eligible.push_back(w.id);
                if (eligible.empty())
                    fail_usage("infeasible spec: no wallet has funds to spend at block " +
                               std::to_string(h));
                Wallet& sender = wallets_[eligible[rng_.next_below(eligible.size())]];

                // receiver: weighted toward active malicious wallets
                double total_w = 0;
                std::vector<std::pair<std::uint32_t, double>> pool;
                for (const Wallet& w : wallets_) {
                    if (!w.organic || w.id == sender.id || h > w.active_until) continue;
                    const double weight = w.malicious ? spec_.malicious_in_mult : 1.0;
                    pool.emplace_back(w.id, weight);
                    total_w += weight;
                }
                Wallet* receiver = &sender;  // single-wallet economies pay themselves
                if (!pool.empty()) {
                    double target = rng_.next_double() * total_w;
                    for (const auto& [id, weight] : pool) {
                        target -= weight;
                        if (target <= 0) {
                            receiver = &wallets_[id];
                            break;
                        }
                    }
                    if (target > 0) receiver = &wallets_[pool.back().first];
                }
                if (spend(sender, *receiver, h)) --organic_left;
            }
        }

        if (h == span - 1 && spec_.final_sweep)
            for (Wallet& w : wallets_)
                if (w.organic) run_sweep(w, h);
    }

    SynthEconomy economy;
    economy.jsonl = std::move(out_);
    economy.truth = std::move(truth_);
    return economy;
}

}  // namespace

WalletSpec load_wallet_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_data("cannot open spec file: " + path);
    WalletSpec s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail_data("spec file line " + std::to_string(lineno) + ": expected key = value");
        auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t");
            const auto e = v.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "wallets") s.wallets = static_cast<std::uint32_t>(parse_i64(value, key));
        else if (key == "malicious_fraction") s.malicious_fraction = parse_double(value, key);
        else if (key == "fresh_change_prob") s.fresh_change_prob = parse_double(value, key);
        else if (key == "self_change_prob") s.self_change_prob = parse_double(value, key);
        else if (key == "reuse_prob") s.reuse_prob = parse_double(value, key);
        else if (key == "receive_reuse_prob") s.receive_reuse_prob = parse_double(value, key);
        else if (key == "activity_rate") s.activity_rate = parse_double(value, key);
        else if (key == "value_mu") s.value_mu = parse_double(value, key);
        else if (key == "value_sigma") s.value_sigma = parse_double(value, key);
        else if (key == "malicious_in_mult") s.malicious_in_mult = parse_double(value, key);
        else if (key == "malicious_value_mult") s.malicious_value_mult = parse_double(value, key);
        else if (key == "malicious_span_quantile") s.malicious_span_quantile = parse_double(value, key);
        else if (key == "sweep_inputs") s.sweep_inputs = value == "true" || value == "1";
        else if (key == "final_sweep") s.final_sweep = value == "true" || value == "1";
        else if (key == "planted_clones") s.planted_clones = static_cast<std::uint32_t>(parse_i64(value, key));
        else if (key == "start_time") s.start_time = parse_i64(value, key);
        else if (key == "block_interval") s.block_interval = static_cast<std::uint32_t>(parse_i64(value, key));
        else if (key == "span_blocks") s.span_blocks = static_cast<std::uint32_t>(parse_i64(value, key));
        else fail_data("spec file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return s;
}

SynthEconomy generate_economy(const WalletSpec& spec, std::uint32_t n_tx, std::uint64_t seed) {
    EconomyBuilder builder(spec, n_tx, seed);
    return builder.build();
}

ClusteringMetrics evaluate_clustering(const EntityPartition& predicted, const AddressTable& table,
                                      const GroundTruth& truth) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> contingency;
    std::map<std::uint32_t, std::uint64_t> per_entity, per_wallet;
    std::string missing;
    std::size_t n_missing = 0;
    for (const auto& [addr, wallet] : truth.wallet_of) {
        if (!table.has(addr)) {
            if (n_missing < 5) missing += (missing.empty() ? "" : ", ") + addr;
            ++n_missing;
            continue;
        }
        const AddressId id = table.lookup(addr);
        const std::uint32_t entity = predicted.entity(id);
        ++contingency[{entity, wallet}];
        ++per_entity[entity];
        ++per_wallet[wallet];
    }
    if (n_missing)
        fail_data("predicted partition does not cover " + std::to_string(n_missing) +
                  " ground-truth address(es): " + missing + (n_missing > 5 ? ", ..." : ""));

    auto pairs = [](std::uint64_t n) { return n * (n - 1) / 2; };
    std::uint64_t same_pred = 0, same_truth = 0, same_both = 0, total_n = 0;
    for (const auto& [e, n] : per_entity) same_pred += pairs(n);
    for (const auto& [w, n] : per_wallet) {
        same_truth += pairs(n);
        total_n += n;
    }
    for (const auto& [key, n] : contingency) same_both += pairs(n);

    ClusteringMetrics m;
    m.pairwise_precision = same_pred ? static_cast<double>(same_both) / same_pred : 1.0;
    m.pairwise_recall = same_truth ? static_cast<double>(same_both) / same_truth : 1.0;
    m.f1 = (m.pairwise_precision + m.pairwise_recall) > 0
               ? 2.0 * m.pairwise_precision * m.pairwise_recall /
                     (m.pairwise_precision + m.pairwise_recall)
               : 0.0;

    const double total_pairs = static_cast<double>(pairs(total_n));
    if (total_pairs == 0) {
        m.adjusted_rand_index = 1.0;
    } else {
        const double expected =
            static_cast<double>(same_pred) * static_cast<double>(same_truth) / total_pairs;
        const double maximum =
            0.5 * (static_cast<double>(same_pred) + static_cast<double>(same_truth));
        m.adjusted_rand_index =
            maximum == expected
                ? 1.0
                : (static_cast<double>(same_both) - expected) / (maximum - expected);
    }
    return m;
}

void write_truth_csv(const GroundTruth& truth, std::ostream& out) {
    out << "address,wallet,label\n";
    std::vector<std::pair<std::string, std::uint32_t>> rows(truth.wallet_of.begin(),
                                                            truth.wallet_of.end());
    std::sort(rows.begin(), rows.end());
    for (const auto& [addr, wallet] : rows)
        out << addr << ',' << wallet << ','
            << (truth.wallet_malicious[wallet] ? "malicious" : "benign") << '\n';
}

void write_changes_csv(const GroundTruth& truth, std::ostream& out) {
    out << "txid,change_address\n";
    std::vector<std::pair<std::string, std::string>> rows(truth.change_of.begin(),
                                                          truth.change_of.end());
    std::sort(rows.begin(), rows.end());
    for (const auto& [txid, addr] : rows) out << txid << ',' << addr << '\n';
}

void write_labels_csv(const GroundTruth& truth, std::ostream& out) {
    out << "address,label\n";
    std::vector<std::string> rows;
    for (const auto& [addr, wallet] : truth.wallet_of)
        if (truth.wallet_malicious[wallet]) rows.push_back(addr);
    std::sort(rows.begin(), rows.end());
    for (const std::string& addr : rows) out << addr << ",malicious\n";
}

}  // namespace chainlens
