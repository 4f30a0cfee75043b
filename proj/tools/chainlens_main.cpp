#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "chainlens/pipeline.hpp"

using namespace chainlens;

namespace {

int exit_code(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Usage: return 1;
        case ErrorKind::Data:
        case ErrorKind::Auth: return 2;
        case ErrorKind::Stage: return 3;
    }
    return 3;
}

void add_pipeline_flags(CLI::App* cmd, PipelineConfig& cfg, std::string& config_path,
                        std::string& granularity, std::string& variants, std::string& heuristics) {
    cmd->add_option("--config", config_path, "pipeline config file (key = value lines)");
    cmd->add_option("--in", cfg.input, "transactions jsonl");
    cmd->add_option("--labels", cfg.labels, "label csv (address,label)");
    cmd->add_option("--out,--outdir", cfg.outdir, "output directory");
    cmd->add_option("--seed", cfg.seed, "PRNG seed");
    cmd->add_option("--epsilon", cfg.epsilon, "cosine threshold exponent, in [0,20]");
    cmd->add_option("--k", cfg.k, "k-means cluster count");
    cmd->add_option("--granularity", granularity, "comma list: 15d,1m");
    cmd->add_option("--variant", variants, "comma list: 1,2,3");
    cmd->add_option("--heuristics", heuristics,
                    "comma list: multi_input,change,change_cond4prime,value,growth,no_guards");
    cmd->add_option("--threads", cfg.threads, "OpenMP thread cap (0 = default)");
    cmd->add_option("--reference", cfg.reference, "reference histogram json for KLD");
    cmd->add_option("--rpc-url", cfg.rpc_url, "bitcoin JSON-RPC endpoint");
    cmd->add_option("--rpc-user", cfg.rpc_user, "rpc user");
    cmd->add_option("--rpc-pass", cfg.rpc_pass, "rpc password");
    cmd->add_option("--from-height", cfg.from_height, "first block height");
    cmd->add_option("--to-height", cfg.to_height, "last block height");
}

PipelineConfig resolve_config(const std::string& config_path, const PipelineConfig& overrides,
                              const std::string& granularity, const std::string& variants,
                              const std::string& heuristics, const CLI::App* cmd) {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
    // explicit flags win over the file
    auto used = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    if (used("--in")) cfg.input = overrides.input;
    if (used("--labels")) cfg.labels = overrides.labels;
    if (used("--out")) cfg.outdir = overrides.outdir;
    if (used("--seed")) cfg.seed = overrides.seed;
    if (used("--epsilon")) cfg.epsilon = overrides.epsilon;
    if (used("--k")) cfg.k = overrides.k;
    if (used("--threads")) cfg.threads = overrides.threads;
    if (used("--reference")) cfg.reference = overrides.reference;
    if (used("--rpc-url")) cfg.rpc_url = overrides.rpc_url;
    if (used("--rpc-user")) cfg.rpc_user = overrides.rpc_user;
    if (used("--rpc-pass")) cfg.rpc_pass = overrides.rpc_pass;
    if (used("--from-height")) cfg.from_height = overrides.from_height;
    if (used("--to-height")) cfg.to_height = overrides.to_height;
    if (used("--granularity")) apply_config_line(cfg, "granularities", granularity);
    if (used("--variant")) apply_config_line(cfg, "variants", variants);
    if (used("--heuristics")) apply_config_line(cfg, "heuristics", heuristics);
    if (cfg.epsilon < 0 || cfg.epsilon > 20) fail_usage("epsilon must lie in [0, 20]");
    return cfg;
}

void print_run_result(const RunManifest& m, const std::string& outdir) {
    if (m.up_to_date)
        std::cout << "up to date; artifacts verified under " << outdir << "\n";
    else
        std::cout << "pipeline complete; artifacts under " << outdir << "\n";
    for (const std::string& w : m.warnings) std::cout << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chainlens: transaction-graph forensics over UTXO chains"};
    app.require_subcommand(1);

    PipelineConfig flags;
    std::string config_path, granularity, variants, heuristics;

    // full pipeline, and the stage views over the same artifact tree
    auto* run = app.add_subcommand("run", "run the full pipeline");
    add_pipeline_flags(run, flags, config_path, granularity, variants, heuristics);
    auto* fit = app.add_subcommand("fit", "ensure pipeline artifacts and point at the fit stage");
    add_pipeline_flags(fit, flags, config_path, granularity, variants, heuristics);
    auto* detect = app.add_subcommand("detect", "ensure pipeline artifacts and point at detect");
    add_pipeline_flags(detect, flags, config_path, granularity, variants, heuristics);
    auto* report = app.add_subcommand("report", "ensure pipeline artifacts and print the summary");
    add_pipeline_flags(report, flags, config_path, granularity, variants, heuristics);

    // fetch
    std::string fetch_out = "txs.jsonl";
    auto* fetch = app.add_subcommand("fetch", "pull blocks over JSON-RPC into jsonl");
    fetch->add_option("--rpc-url", flags.rpc_url, "endpoint")->required();
    fetch->add_option("--rpc-user", flags.rpc_user, "user");
    fetch->add_option("--rpc-pass", flags.rpc_pass, "password");
    fetch->add_option("--from-height", flags.from_height, "first height")->required();
    fetch->add_option("--to-height", flags.to_height, "last height")->required();
    fetch->add_option("--out", fetch_out, "output jsonl path");

    // ingest
    std::string ingest_in, ingest_out = "parsed.jsonl";
    bool ingest_filtered = false;
    auto* ingest = app.add_subcommand("ingest", "parse, validate and canonicalize transactions");
    ingest->add_option("--in", ingest_in, "input jsonl")->required();
    ingest->add_option("--out", ingest_out, "canonical jsonl output");
    ingest->add_flag("--filtered", ingest_filtered, "drop op_return/script-hash transactions");

    // cluster
    std::string cl_in, cl_out = "entities.csv", cl_log, cl_heur = "multi_input,change";
    auto* cluster = app.add_subcommand("cluster", "resolve addresses into user entities");
    cluster->add_option("--in", cl_in, "input jsonl")->required();
    cluster->add_option("--heuristics", cl_heur, "heuristic set");
    cluster->add_option("--out", cl_out, "partition csv");
    cluster->add_option("--log", cl_log, "merge log jsonl");

    // graph
    std::string gr_in, gr_outdir = "graphs", gr_gran = "1m", gr_heur = "multi_input,change";
    bool gr_raw = false;
    auto* graph = app.add_subcommand("graph", "build per-segment user graphs");
    graph->add_option("--in", gr_in, "input jsonl")->required();
    graph->add_option("--granularity", gr_gran, "15d or 1m");
    graph->add_option("--outdir", gr_outdir, "output directory");
    graph->add_option("--heuristics", gr_heur, "heuristic set for entity collapse");
    graph->add_flag("--raw", gr_raw, "skip clustering; one entity per address");

    // features
    std::string fe_in, fe_outdir = "features", fe_gran = "1m", fe_heur = "multi_input,change";
    int fe_variant = 2;
    std::uint32_t fe_window = 144;
    auto* features = app.add_subcommand("features", "extract per-entity feature matrices");
    features->add_option("--in", fe_in, "input jsonl")->required();
    features->add_option("--granularity", fe_gran, "15d or 1m");
    features->add_option("--variant", fe_variant, "1, 2 or 3");
    features->add_option("--outdir", fe_outdir, "output directory");
    features->add_option("--heuristics", fe_heur, "heuristic set");
    features->add_option("--window", fe_window, "attractiveness window in blocks");

    // synth
    std::string sy_spec, sy_out = "synth";
    std::uint64_t sy_seed = 42;
    std::uint32_t sy_txs = 5000;
    auto* synth = app.add_subcommand("synth", "generate a ground-truth economy");
    synth->add_option("--spec", sy_spec, "wallet spec file");
    synth->add_option("--out", sy_out, "output directory");
    synth->add_option("--seed", sy_seed, "seed");
    synth->add_option("--txs", sy_txs, "transaction count");

    // config
    bool show_defaults = false;
    auto* config = app.add_subcommand("config", "configuration helpers");
    config->add_flag("--defaults", show_defaults, "print the default configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems exit 1; --help exits 0
    }

    try {
        if (*config) {
            std::cout << render_config(PipelineConfig{});
            return 0;
        }
        if (*fetch) {
            std::ofstream out(fetch_out);
            if (!out) fail_data("cannot write " + fetch_out);
            std::size_t n = 0;
            fetch_blocks({flags.rpc_url, flags.rpc_user, flags.rpc_pass}, flags.from_height,
                         flags.to_height, [&](const std::string& line) {
                             out << line << '\n';
                             ++n;
                         });
            std::cout << "fetched " << n << " transactions into " << fetch_out << "\n";
            return 0;
        }
        if (*ingest) {
            TxStore store = parse_transactions_file(ingest_in);
            if (ingest_filtered) store = filter_analyzable(store);
            std::ofstream out(ingest_out);
            if (!out) fail_data("cannot write " + ingest_out);
            write_canonical_jsonl(store, out);
            std::cout << store.txs().size() << " transactions, " << store.addresses().size()
                      << " addresses -> " << ingest_out << "\n";
            return 0;
        }
        if (*cluster) {
            const TxStore store = filter_analyzable(parse_transactions_file(cl_in));
            const HeuristicConfig hc = parse_heuristics_flag(cl_heur);
            const EntityClusters clusters = cluster_entities(store, hc);
            const auto occurring = occurring_addresses(store);
            const EntityPartition partition = clusters.partition(occurring);
            std::ofstream out(cl_out);
            if (!out) fail_data("cannot write " + cl_out);
            write_partition_csv(partition, occurring, store.addresses(), out);
            if (!cl_log.empty()) {
                std::ofstream lg(cl_log);
                if (!lg) fail_data("cannot write " + cl_log);
                write_merge_log_jsonl(clusters, store, lg);
            }
            if (partition.collapse_warning)
                std::cout << "warning: largest entity holds "
                          << format_double(partition.largest_fraction * 100.0)
                          << "% of all addresses in the window\n";
            std::cout << "partition written to " << cl_out << "\n";
            return 0;
        }
        if (*graph || *features) {
            const bool is_graph = static_cast<bool>(*graph);
            const std::string in = is_graph ? gr_in : fe_in;
            const std::string outdir = is_graph ? gr_outdir : fe_outdir;
            const Granularity g = parse_granularity(is_graph ? gr_gran : fe_gran);
            const TxStore store = filter_analyzable(parse_transactions_file(in));
            EntityPartition partition;
            const bool clustered = !(is_graph && gr_raw) && !(is_graph ? gr_heur : fe_heur).empty();
            if (clustered) {
                const HeuristicConfig hc = parse_heuristics_flag(is_graph ? gr_heur : fe_heur);
                partition = cluster_entities(store, hc).partition(occurring_addresses(store));
            }
            const auto segments = segment_store(store, g);
            for (const Segment& seg : segments) {
                if (is_graph) {
                    const UserGraph ug =
                        build_user_graph(store, seg, clustered ? &partition : nullptr);
                    std::ostringstream csv;
                    write_edge_csv(ug, store, csv);
                    write_file(outdir + "/ug_" + seg.label + ".csv", csv.str());
                } else {
                    FeatureOptions opts;
                    opts.attractiveness_window = fe_window;
                    const FeatureMatrix m = assemble_dataset(
                        store, seg, fe_variant, clustered ? &partition : nullptr, opts);
                    std::ostringstream csv;
                    write_feature_csv(m, csv);
                    write_file(outdir + "/v" + std::to_string(fe_variant) + "_" + seg.label +
                                   ".csv",
                               csv.str());
                }
            }
            std::cout << segments.size() << " segments -> " << outdir << "\n";
            return 0;
        }
        if (*synth) {
            const WalletSpec spec = sy_spec.empty() ? WalletSpec{} : load_wallet_spec(sy_spec);
            const SynthEconomy economy = generate_economy(spec, sy_txs, sy_seed);
            write_file(sy_out + "/txs.jsonl", economy.jsonl);
            std::ostringstream truth, changes, labels;
            write_truth_csv(economy.truth, truth);
            write_changes_csv(economy.truth, changes);
            write_labels_csv(economy.truth, labels);
            write_file(sy_out + "/truth.csv", truth.str());
            write_file(sy_out + "/changes.csv", changes.str());
            write_file(sy_out + "/labels.csv", labels.str());
            std::cout << "economy written to " << sy_out << "\n";
            return 0;
        }
        // run / fit / detect / report share the pipeline
        CLI::App* active = *run ? run : *fit ? fit : *detect ? detect : report;
        const PipelineConfig cfg =
            resolve_config(config_path, flags, granularity, variants, heuristics, active);
        const RunManifest m = run_pipeline(cfg);
        print_run_result(m, cfg.outdir);
        if (*fit) std::cout << "fit tables: " << cfg.outdir << "/fit/fits.json\n";
        if (*detect) std::cout << "detection artifacts: " << cfg.outdir << "/detect/\n";
        if (*report) {
            std::ifstream in(cfg.outdir + "/report/summary.txt");
            std::cout << in.rdbuf();
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
