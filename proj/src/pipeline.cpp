#include "chainlens/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace chainlens {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_data("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail_stage("cannot write file: " + path);
    out << content;
}

namespace {

std::string join_csv(const std::vector<std::string>& parts) {
    std::string s;
    for (const auto& p : parts) {
        if (!s.empty()) s += ',';
        s += p;
    }
    return s;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

}  // namespace

void apply_config_line(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "input") cfg.input = value;
    else if (key == "labels") cfg.labels = value;
    else if (key == "outdir") cfg.outdir = value;
    else if (key == "rpc_url") cfg.rpc_url = value;
    else if (key == "rpc_user") cfg.rpc_user = value;
    else if (key == "rpc_pass") cfg.rpc_pass = value;
    else if (key == "from_height") cfg.from_height = static_cast<std::uint32_t>(parse_i64(value, key));
    else if (key == "to_height") cfg.to_height = static_cast<std::uint32_t>(parse_i64(value, key));
    else if (key == "granularities") {
        cfg.granularities.clear();
        for (const std::string& g : split_csv(value)) cfg.granularities.push_back(parse_granularity(g));
        if (cfg.granularities.empty()) fail_usage("at least one granularity is required");
    } else if (key == "variants") {
        cfg.variants.clear();
        for (const std::string& v : split_csv(value)) {
            const int j = static_cast<int>(parse_i64(v, "variant"));
            if (j < 1 || j > 3) fail_usage("variant must be 1, 2 or 3");
            cfg.variants.push_back(j);
        }
        if (cfg.variants.empty()) fail_usage("at least one variant is required");
    } else if (key == "heuristics") cfg.heuristics = parse_heuristics_flag(value);
    else if (key == "growth_cap") cfg.heuristics.growth_merge_cap = static_cast<std::uint32_t>(parse_i64(value, key));
    else if (key == "k") cfg.k = static_cast<std::uint32_t>(parse_i64(value, key));
    else if (key == "epsilon") {
        cfg.epsilon = parse_double(value, key);
        if (cfg.epsilon < 0 || cfg.epsilon > 20) fail_usage("epsilon must lie in [0, 20]");
    } else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_i64(value, key));
    else if (key == "stats") {
        cfg.stats.stats = split_csv(value);
        if (cfg.stats.stats.empty()) fail_usage("stat set must not be empty");
    } else if (key == "attract_window") cfg.attract_window = static_cast<std::uint32_t>(parse_i64(value, key));
    else if (key == "x_min") cfg.x_min = parse_double(value, key);
    else if (key == "reference") cfg.reference = value;
    else if (key == "threads") cfg.threads = static_cast<int>(parse_i64(value, key));
    else fail_usage("unknown config key '" + key + "'");
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_data("cannot open config file: " + path);
    PipelineConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t\r");
            const auto e = v.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail_usage("config line " + std::to_string(lineno) + ": expected key = value");
        apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string render_config(const PipelineConfig& cfg) {
    std::vector<std::string> g, v;
    for (Granularity gr : cfg.granularities) g.push_back(granularity_name(gr));
    for (int j : cfg.variants) v.push_back(std::to_string(j));
    std::string s;
    s += "input = " + cfg.input + "\n";
    s += "labels = " + cfg.labels + "\n";
    s += "outdir = " + cfg.outdir + "\n";
    s += "rpc_url = " + cfg.rpc_url + "\n";
    s += "rpc_user = " + cfg.rpc_user + "\n";
    s += "from_height = " + format_u64(cfg.from_height) + "\n";
    s += "to_height = " + format_u64(cfg.to_height) + "\n";
    s += "granularities = " + join_csv(g) + "\n";
    s += "variants = " + join_csv(v) + "\n";
    s += "heuristics = " + heuristics_to_string(cfg.heuristics) + "\n";
    s += "growth_cap = " + format_u64(cfg.heuristics.growth_merge_cap) + "\n";
    s += "k = " + format_u64(cfg.k) + "\n";
    s += "epsilon = " + format_double(cfg.epsilon) + "\n";
    s += "seed = " + format_u64(cfg.seed) + "\n";
    s += "stats = " + join_csv(cfg.stats.stats) + "\n";
    s += "attract_window = " + format_u64(cfg.attract_window) + "\n";
    s += "x_min = " + format_double(cfg.x_min) + "\n";
    s += "reference = " + cfg.reference + "\n";
    return s;
}

// Analysis parameters only: paths (input, labels, outdir) are locations, not
// semantics, and their content is covered by the stage signatures.
std::string config_hash(const PipelineConfig& cfg) {
    std::vector<std::string> g, v;
    for (Granularity gr : cfg.granularities) g.push_back(granularity_name(gr));
    for (int j : cfg.variants) v.push_back(std::to_string(j));
    std::string s;
    s += "granularities=" + join_csv(g);
    s += ";variants=" + join_csv(v);
    s += ";heuristics=" + heuristics_to_string(cfg.heuristics);
    s += ";growth_cap=" + format_u64(cfg.heuristics.growth_merge_cap);
    s += ";k=" + format_u64(cfg.k);
    s += ";epsilon=" + format_double(cfg.epsilon);
    s += ";seed=" + format_u64(cfg.seed);
    s += ";stats=" + join_csv(cfg.stats.stats);
    s += ";attract_window=" + format_u64(cfg.attract_window);
    s += ";x_min=" + format_double(cfg.x_min);
    return to_hex(fnv1a64(s));
}

namespace {

struct SegmentKey {
    Granularity g;
    int variant;
    std::uint32_t segment;
    bool operator<(const SegmentKey& o) const {
        return std::tie(g, variant, segment) < std::tie(o.g, o.variant, o.segment);
    }
};

struct PipelineState {
    TxStore parsed;
    TxStore filtered;
    LabelSet labels;
    EntityPartition partition;
    std::vector<MergeEvent> merge_log;  // not persisted back, only exported
    std::map<Granularity, std::vector<Segment>> segments;
    std::map<SegmentKey, FeatureMatrix> matrices;
    std::map<std::pair<Granularity, std::uint32_t>, UserGraph> clustered_graphs;
};

struct ManifestIo {
    static RunManifest load(const std::string& path) {
        RunManifest m;
        const json j = json::parse(read_file(path));
        m.config_hash = j.value("config_hash", "");
        m.tool_version = j.value("tool_version", "");
        if (j.contains("config"))
            for (const auto& [k2, v2] : j["config"].items())
                m.config_values[k2] = v2.get<std::string>();
        if (j.contains("stages"))
            for (const auto& [stage, rec] : j["stages"].items()) {
                auto& entry = m.stages[stage];
                entry.first = rec.value("input_sig", "");
                if (rec.contains("artifacts"))
                    for (const auto& [p, c] : rec["artifacts"].items())
                        entry.second[p] = c.get<std::string>();
            }
        if (j.contains("warnings"))
            for (const auto& w : j["warnings"]) m.warnings.push_back(w.get<std::string>());
        return m;
    }

    static std::string dump(const RunManifest& m) {
        json j;
        j["config_hash"] = m.config_hash;
        j["config"] = m.config_values;
        j["tool_version"] = m.tool_version;
        j["stages"] = json::object();
        for (const auto& [stage, rec] : m.stages) {
            json r;
            r["input_sig"] = rec.first;
            r["artifacts"] = json::object();
            for (const auto& [p, c] : rec.second) r["artifacts"][p] = c;
            j["stages"][stage] = r;
        }
        j["warnings"] = m.warnings;
        return j.dump(2) + "\n";
    }
};

class Artifacts {
public:
    explicit Artifacts(std::string outdir) : outdir_(std::move(outdir)) {}

    void put(RunManifest& m, const std::string& stage, const std::string& rel,
             const std::string& content) {
        write_file(outdir_ + "/" + rel, content);
        m.stages[stage].second[rel] = to_hex(fnv1a64(content));
    }

    bool verify(const RunManifest& m) const {
        for (const auto& [stage, rec] : m.stages)
            for (const auto& [rel, checksum] : rec.second) {
                const std::string path = outdir_ + "/" + rel;
                if (!fs::exists(path)) return false;
                if (to_hex(fnv1a64(read_file(path))) != checksum) return false;
            }
        return true;
    }

private:
    std::string outdir_;
};

struct DirLock {
    explicit DirLock(const std::string& outdir) : path_(outdir + "/.lock") {
        fs::create_directories(outdir);
        if (fs::exists(path_))
            fail_stage("output directory is locked by another run (remove " + path_ +
                       " if that run is dead)");
        std::ofstream(path_) << "locked\n";
    }
    ~DirLock() { std::error_code ec; fs::remove(path_, ec); }
    std::string path_;
};

std::string labels_checksum(const PipelineConfig& cfg) {
    if (cfg.labels.empty()) return "none";
    return to_hex(fnv1a64(read_file(cfg.labels)));
}

// entity -> is any member address labeled malicious
std::set<std::uint32_t> malicious_entities(const LabelSet& labels, const EntityPartition* p) {
    std::set<std::uint32_t> out;
    for (const auto& [addr, label] : labels.labels)
        if (label == Label::Malicious) out.insert(p ? p->entity(addr) : addr);
    return out;
}

std::map<std::uint32_t, std::vector<AddressId>> entity_members(const EntityPartition* p,
                                                               const std::vector<bool>& occurring) {
    std::map<std::uint32_t, std::vector<AddressId>> members;
    for (AddressId a = 0; a < occurring.size(); ++a) {
        if (!occurring[a]) continue;
        members[p ? p->entity(a) : a].push_back(a);
    }
    return members;
}

struct DetectRun {
    SuspectReport benign_report;
    std::vector<PkEntry> malicious_entries;  // anchors; flagged = sat in the chosen cluster
    std::vector<std::string> skipped;        // "label: reason"
    std::map<std::string, EpsilonSweep> sweeps;  // per segment label
};

DetectRun detect_one(const PipelineConfig& cfg, PipelineState& state, Granularity g, int variant,
                     const std::set<std::uint32_t>& malicious_set) {
    DetectRun run;
    std::map<std::uint32_t, ActivityCounts> benign_counts, malicious_counts;
    std::vector<double> grid;
    for (int e = 0; e <= 20; ++e) grid.push_back(e);

    for (const Segment& seg : state.segments[g]) {
        const auto it = state.matrices.find({g, variant, seg.index});
        if (it == state.matrices.end()) continue;
        const FeatureMatrix& m = it->second;
        const std::size_t rows = m.rows();
        if (rows == 0) {
            run.skipped.push_back(seg.label + ": no activity");
            continue;
        }

        std::vector<std::uint8_t> mal(rows, 0);
        std::size_t n_mal = 0;
        for (std::size_t r = 0; r < rows; ++r)
            if (malicious_set.count(m.entities[r])) {
                mal[r] = 1;
                ++n_mal;
            }
        if (n_mal == 0) {
            run.skipped.push_back(seg.label + ": no malicious labels in segment");
            continue;
        }
        if (rows < 2 || rows < cfg.k) {
            run.skipped.push_back(seg.label + ": only " + std::to_string(rows) +
                                  " active entities (need max(2, k))");
            continue;
        }
        // a collapsed segment pins nearly everything to one entity; detection
        // over it is meaningless
        if (variant >= 2) {
            std::set<AddressId> seen;
            for (std::uint32_t ord : seg.tx_ordinals) {
                const TxRecord& tx = state.filtered.txs()[ord];
                for (const TxIo& io : tx.inputs) seen.insert(io.addr);
                for (const TxIo& io : tx.outputs) seen.insert(io.addr);
            }
            std::map<std::uint32_t, std::size_t> addr_count;
            for (AddressId a : seen) ++addr_count[state.partition.entity(a)];
            std::size_t largest = 0;
            for (const auto& [e, c] : addr_count) largest = std::max(largest, c);
            if (!seen.empty() &&
                static_cast<double>(largest) / static_cast<double>(seen.size()) > 0.5) {
                run.skipped.push_back(seg.label +
                                      ": entity collapse (largest entity holds >50% of addresses)");
                continue;
            }
        }

        const ZScoreResult z = zscore_normalize(m.values.data(), rows, m.cols());
        const ClusterAssignment a = kmeans(z.values.data(), rows, m.cols(), cfg.k, cfg.seed);
        const auto chosen = select_malicious_cluster(a, mal);
        if (!chosen) {
            run.skipped.push_back(seg.label + ": no malicious labels in segment");
            continue;
        }
        const FlagResult flags =
            flag_suspects(z, rows, m.cols(), a, *chosen, mal, cfg.epsilon);
        run.sweeps.emplace(seg.label,
                           epsilon_sweep(z, rows, m.cols(), a, *chosen, mal, grid));

        for (std::size_t r = 0; r < rows; ++r) {
            const std::uint32_t entity = m.entities[r];
            if (mal[r]) {
                auto& c = malicious_counts[entity];
                ++c.active;
                if (a.labels[r] == *chosen) ++c.flagged;
            } else {
                auto& c = benign_counts[entity];
                ++c.active;
                if (flags.flagged[r]) ++c.flagged;
            }
        }
    }

    run.benign_report = behavior_report(malicious_probability(benign_counts));
    run.malicious_entries = malicious_probability(malicious_counts);
    return run;
}

struct FitGroup {
    Granularity g;
    std::uint8_t half;  // 0 = whole granularity (1m), 1/2 for 15d
    std::string cls;    // benign / malicious
    std::string signal; // in_degree / out_degree / inter_event
    std::vector<double> samples;
};

std::vector<FitGroup> collect_fit_groups(const PipelineConfig& cfg, PipelineState& state,
                                         const std::set<std::uint32_t>& malicious_set) {
    // degrees ride on the clustered non-temporal matrices; inter-event comes
    // straight off the clustered graphs
    int source_variant = 0;
    for (int v : cfg.variants)
        if (v >= 2) source_variant = source_variant == 0 ? v : std::min(source_variant, v);
    if (source_variant == 0) return {};

    std::map<std::tuple<Granularity, std::uint8_t, bool, std::string>, std::vector<double>> acc;
    for (Granularity g : cfg.granularities) {
        for (const Segment& seg : state.segments[g]) {
            const auto it = state.matrices.find({g, source_variant, seg.index});
            if (it == state.matrices.end() || it->second.rows() == 0) continue;
            const FeatureMatrix& m = it->second;
            const std::size_t in_col = m.column("in_degree");
            const std::size_t out_col = m.column("out_degree");
            const std::uint8_t half = g == Granularity::FifteenDays ? seg.half : 0;
            const auto& ug = state.clustered_graphs.at({g, seg.index});
            for (std::size_t r = 0; r < m.rows(); ++r) {
                const bool mal = malicious_set.count(m.entities[r]) != 0;
                acc[{g, half, mal, "in_degree"}].push_back(m.at(r, in_col));
                acc[{g, half, mal, "out_degree"}].push_back(m.at(r, out_col));
                for (std::uint32_t gap : inter_event_times(ug.node_of(m.entities[r]), ug))
                    acc[{g, half, mal, "inter_event"}].push_back(gap);
            }
        }
    }
    std::vector<FitGroup> groups;
    for (auto& [key, samples] : acc) {
        const auto& [g, half, mal, signal] = key;
        groups.push_back({g, half, mal ? "malicious" : "benign", signal, std::move(samples)});
    }
    return groups;
}

json fit_result_json(const FitResult& f) {
    json j;
    j["model"] = fit_model_name(f.model);
    j["alpha"] = f.alpha;
    j["lambda"] = f.lambda;
    j["mu"] = f.mu;
    j["sigma"] = f.sigma;
    j["x_min"] = f.x_min;
    j["ks"] = f.ks;
    j["loglik"] = f.loglik;
    j["n_tail"] = f.n_tail;
    if (f.degenerate) j["degenerate"] = true;
    if (!f.warning.empty()) j["warning"] = f.warning;
    return j;
}

std::string classification_of(BehaviorClass c) { return behavior_class_name(c); }

}  // namespace

RunManifest run_pipeline(const PipelineConfig& cfg) {
    if (cfg.granularities.empty() || cfg.variants.empty())
        fail_usage("config needs at least one granularity and one variant");
    if (cfg.input.empty() && cfg.rpc_url.empty())
        fail_usage("config needs either an input file or an rpc url");
    if (!cfg.input.empty() && !fs::exists(cfg.input))
        fail_data("input file does not exist: " + cfg.input);
    if (!cfg.labels.empty() && !fs::exists(cfg.labels))
        fail_data("label file does not exist: " + cfg.labels);
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif

    DirLock lock(cfg.outdir);
    Artifacts artifacts(cfg.outdir);
    const auto t_start = std::chrono::steady_clock::now();

    RunManifest manifest;
    manifest.config_hash = config_hash(cfg);
    manifest.tool_version = kToolVersion;
    {
        std::vector<std::string> g, v;
        for (Granularity gr : cfg.granularities) g.push_back(granularity_name(gr));
        for (int j : cfg.variants) v.push_back(std::to_string(j));
        manifest.config_values = {{"granularities", join_csv(g)},
                                  {"variants", join_csv(v)},
                                  {"heuristics", heuristics_to_string(cfg.heuristics)},
                                  {"growth_cap", format_u64(cfg.heuristics.growth_merge_cap)},
                                  {"k", format_u64(cfg.k)},
                                  {"epsilon", format_double(cfg.epsilon)},
                                  {"seed", format_u64(cfg.seed)},
                                  {"stats", join_csv(cfg.stats.stats)},
                                  {"attract_window", format_u64(cfg.attract_window)},
                                  {"x_min", format_double(cfg.x_min)}};
    }

    // stage input signatures
    std::string input_path = cfg.input;
    std::string fetched;
    if (input_path.empty()) {
        fetch_blocks({cfg.rpc_url, cfg.rpc_user, cfg.rpc_pass}, cfg.from_height, cfg.to_height,
                     [&](const std::string& line) {
                         fetched += line;
                         fetched += '\n';
                     });
    }
    const std::string input_bytes = input_path.empty() ? fetched : read_file(input_path);
    const std::string lbl_sum = labels_checksum(cfg);
    std::vector<std::string> gnames;
    for (Granularity g : cfg.granularities) gnames.push_back(granularity_name(g));
    std::vector<std::string> vnames;
    for (int v : cfg.variants) vnames.push_back(std::to_string(v));

    const std::string ingest_sig = to_hex(fnv1a64(input_bytes));
    const std::string cluster_sig =
        to_hex(fnv1a64(ingest_sig + "|" + heuristics_to_string(cfg.heuristics) + "|" +
                       format_u64(cfg.heuristics.growth_merge_cap)));
    const std::string graphs_sig = to_hex(fnv1a64(cluster_sig + "|" + join_csv(gnames)));
    const std::string features_sig =
        to_hex(fnv1a64(graphs_sig + "|" + join_csv(vnames) + "|" + join_csv(cfg.stats.stats) +
                       "|" + format_u64(cfg.attract_window)));
    const std::string ref_sum =
        cfg.reference.empty() ? "none" : to_hex(fnv1a64(read_file(cfg.reference)));
    const std::string fit_sig = to_hex(
        fnv1a64(features_sig + "|" + format_double(cfg.x_min) + "|" + lbl_sum + "|" + ref_sum));
    const std::string detect_sig =
        to_hex(fnv1a64(features_sig + "|" + lbl_sum + "|" + format_u64(cfg.k) + "|" +
                       format_double(cfg.epsilon) + "|" + format_u64(cfg.seed)));
    const std::string report_sig = to_hex(fnv1a64(fit_sig + "|" + detect_sig));

    const std::map<std::string, std::string> sigs = {
        {"ingest", ingest_sig},   {"cluster", cluster_sig}, {"graphs", graphs_sig},
        {"features", features_sig}, {"fit", fit_sig},       {"detect", detect_sig},
        {"report", report_sig}};

    // short-circuit: unchanged inputs, verified artifacts -> no stage work
    const std::string manifest_path = cfg.outdir + "/manifest.json";
    if (fs::exists(manifest_path)) {
        try {
            RunManifest prev = ManifestIo::load(manifest_path);
            bool clean = prev.config_hash == manifest.config_hash &&
                         prev.stages.size() == sigs.size();
            for (const auto& [stage, sig] : sigs) {
                const auto it = prev.stages.find(stage);
                if (it == prev.stages.end() || it->second.first != sig) clean = false;
            }
            if (clean && artifacts.verify(prev)) {
                write_file(manifest_path, ManifestIo::dump(prev));
                prev.up_to_date = true;
                write_file(cfg.outdir + "/logs/run.log", "up to date; no stage work performed\n");
                return prev;
            }
        } catch (const Error&) {
            // stale or unreadable manifest; fall through to a full run
        }
    }

    for (const auto& [stage, sig] : sigs) manifest.stages[stage].first = sig;
    std::ostringstream log;

    // ---- ingest ----------------------------------------------------------
    PipelineState state;
    {
        std::istringstream in(input_bytes);
        state.parsed = parse_transactions(in);
    }
    state.filtered = filter_analyzable(state.parsed);
    if (!cfg.labels.empty()) state.labels = load_labels(cfg.labels, state.parsed.addresses());
    {
        std::ostringstream canon;
        write_canonical_jsonl(state.parsed, canon);
        artifacts.put(manifest, "ingest", "ingest/txs.jsonl", canon.str());
        log << "ingest: " << state.parsed.txs().size() << " transactions ("
            << state.filtered.txs().size() << " analyzable), "
            << state.parsed.addresses().size() << " addresses\n";
    }

    // ---- cluster ---------------------------------------------------------
    const std::vector<bool> occurring = occurring_addresses(state.filtered);
    {
        EntityClusters clusters = cluster_entities(state.filtered, cfg.heuristics);
        state.partition = clusters.partition(occurring);
        state.merge_log = clusters.log();
        if (state.partition.collapse_warning)
            manifest.warnings.push_back(
                "entity collapse: largest entity holds " +
                format_double(state.partition.largest_fraction * 100.0) +
                "% of all addresses in the window");
        std::ostringstream csv, mlog;
        write_partition_csv(state.partition, occurring, state.filtered.addresses(), csv);
        write_merge_log_jsonl(clusters, state.filtered, mlog);
        artifacts.put(manifest, "cluster", "cluster/entities.csv", csv.str());
        artifacts.put(manifest, "cluster", "cluster/merge_log.jsonl", mlog.str());
    }

    // ---- graphs ----------------------------------------------------------
    for (Granularity g : cfg.granularities) {
        state.segments[g] = segment_store(state.filtered, g);
        ordered_json seg_manifest = ordered_json::array();
        for (const Segment& seg : state.segments[g]) {
            const UserGraph ug = build_user_graph(state.filtered, seg, &state.partition);
            std::ostringstream csv;
            write_edge_csv(ug, state.filtered, csv);
            artifacts.put(manifest, "graphs",
                          std::string("graphs/") + granularity_name(g) + "/ug_" + seg.label +
                              ".csv",
                          csv.str());
            ordered_json sj;
            sj["label"] = seg.label;
            sj["index"] = seg.index;
            sj["start_time"] = seg.start_time;
            sj["end_time"] = seg.end_time;
            sj["transactions"] = seg.tx_ordinals.size();
            sj["entities"] = ug.entity_ids.size();
            sj["edges"] = ug.edges.size();
            seg_manifest.push_back(sj);
            state.clustered_graphs.emplace(std::make_pair(g, seg.index), std::move(ug));
        }
        ordered_json gj;
        gj["granularity"] = granularity_name(g);
        gj["config_hash"] = manifest.config_hash;
        gj["segments"] = seg_manifest;
        artifacts.put(manifest, "graphs",
                      std::string("graphs/") + granularity_name(g) + "/segments.json",
                      gj.dump(2) + "\n");
    }

    // ---- features --------------------------------------------------------
    const FeatureOptions fopts{cfg.stats, cfg.attract_window};
    for (Granularity g : cfg.granularities)
        for (int v : cfg.variants)
            for (const Segment& seg : state.segments[g]) {
                FeatureMatrix m;
                if (v == 1) {
                    m = assemble_dataset(state.filtered, seg, 1, nullptr, fopts);
                } else {
                    const UserGraph& ug = state.clustered_graphs.at({g, seg.index});
                    m = assemble_from_graph(ug, seg, v, fopts);
                }
                m.granularity = g;
                m.segment = seg.index;
                std::ostringstream csv;
                write_feature_csv(m, csv);
                artifacts.put(manifest, "features",
                              std::string("features/") + granularity_name(g) + "/v" +
                                  std::to_string(v) + "/" + seg.label + ".csv",
                              csv.str());
                state.matrices.emplace(SegmentKey{g, v, seg.index}, std::move(m));
            }

    // ---- fit -------------------------------------------------------------
    const std::set<std::uint32_t> malicious_clustered =
        malicious_entities(state.labels, &state.partition);
    std::map<std::string, Histogram> fit_histograms;
    std::map<std::string, std::vector<double>> fit_samples;
    {
        ordered_json fits = ordered_json::array();
        const std::vector<FitModel> models = {FitModel::PowerLaw, FitModel::TruncatedPowerLaw,
                                              FitModel::LognormalPositive};
        for (FitGroup& grp : collect_fit_groups(cfg, state, malicious_clustered)) {
            ordered_json entry;
            entry["granularity"] = granularity_name(grp.g);
            entry["half"] = grp.half;
            entry["class"] = grp.cls;
            entry["signal"] = grp.signal;
            entry["n_samples"] = grp.samples.size();
            const std::string key = std::string(granularity_name(grp.g)) + "_h" +
                                    std::to_string(grp.half) + "_" + grp.cls + "_" + grp.signal;
            try {
                const ModelSelection sel = select_best_fit(grp.samples, cfg.x_min, models);
                entry["winner"] = fit_model_name(sel.best.model);
                ordered_json fitted = ordered_json::object();
                for (const FitResult& f : sel.fits) fitted[fit_model_name(f.model)] = fit_result_json(f);
                entry["fits"] = fitted;
                ordered_json comps = ordered_json::array();
                for (const FitComparison& c : sel.comparisons) {
                    ordered_json cj;
                    cj["a"] = fit_model_name(c.a);
                    cj["b"] = fit_model_name(c.b);
                    cj["normalized_llr"] = c.normalized_llr;
                    cj["sign"] = c.normalized_llr > 0 ? 1 : (c.normalized_llr < 0 ? -1 : 0);
                    comps.push_back(cj);
                }
                entry["comparisons"] = comps;
                fit_histograms.emplace(key, log_binned_histogram(grp.samples, cfg.x_min));
                fit_samples.emplace(key, grp.samples);
            } catch (const Error& e) {
                entry["error"] = e.what();
                manifest.warnings.push_back("fit skipped (" + key + "): " + e.what());
            }
            fits.push_back(entry);
        }
        ordered_json out;
        out["x_min"] = cfg.x_min;
        out["entries"] = fits;
        artifacts.put(manifest, "fit", "fit/fits.json", out.dump(2) + "\n");

        if (!cfg.reference.empty()) {
            const json ref = json::parse(read_file(cfg.reference));
            ordered_json klds = ordered_json::array();
            for (const auto& [key, samples] : fit_samples) {
                // reference keys are class_signal; ours carry granularity/half
                const auto second_underscore = key.find('_', key.find('_') + 1);
                const std::string short_key = key.substr(second_underscore + 1);
                if (!ref.contains(short_key)) continue;
                Histogram rh;
                for (const auto& e : ref[short_key]["edges"]) rh.edges.push_back(e.get<double>());
                for (const auto& m2 : ref[short_key]["masses"]) rh.masses.push_back(m2.get<double>());
                ordered_json kj;
                kj["group"] = key;
                kj["reference"] = short_key;
                try {
                    // rebin our samples onto the reference edges for a valid comparison
                    const Histogram mine = histogram_on_edges(
                        std::span<const double>(samples.data(), samples.size()), rh.edges);
                    kj["kld"] = kl_divergence(mine, rh);
                } catch (const Error& e) {
                    kj["error"] = e.what();
                }
                klds.push_back(kj);
            }
            artifacts.put(manifest, "fit", "fit/kld.json", klds.dump(2) + "\n");
        }
    }

    // ---- detect ----------------------------------------------------------
    const auto members = entity_members(&state.partition, occurring);
    const auto members_raw = entity_members(nullptr, occurring);
    const std::set<std::uint32_t> malicious_raw = malicious_entities(state.labels, nullptr);

    std::map<std::pair<Granularity, int>, DetectRun> detect_runs;
    for (Granularity g : cfg.granularities)
        for (int v : cfg.variants) {
            const auto& mal_set = v == 1 ? malicious_raw : malicious_clustered;
            const auto& mem = v == 1 ? members_raw : members;
            DetectRun run = detect_one(cfg, state, g, v, mal_set);
            const std::string dir =
                std::string("detect/") + granularity_name(g) + "/v" + std::to_string(v) + "/";

            for (const auto& [label, sweep] : run.sweeps) {
                std::string csv = "epsilon,count\n";
                for (std::size_t i = 0; i < sweep.epsilons.size(); ++i)
                    csv += format_double(sweep.epsilons[i]) + "," +
                           format_u64(sweep.counts[i]) + "\n";
                artifacts.put(manifest, "detect", dir + "sweep_" + label + ".csv", csv);
            }

            std::string pk = "entity_id,label,n_active,n_flagged,p,classification\n";
            for (std::size_t i = 0; i < run.benign_report.entries.size(); ++i) {
                const PkEntry& e = run.benign_report.entries[i];
                pk += format_u64(e.entity) + ",benign," + format_u64(e.n_active) + "," +
                      format_u64(e.n_flagged) + "," + format_double(e.p) + "," +
                      classification_of(run.benign_report.classes[i]) + "\n";
            }
            for (const PkEntry& e : run.malicious_entries)
                pk += format_u64(e.entity) + ",malicious," + format_u64(e.n_active) + "," +
                      format_u64(e.n_flagged) + "," + format_double(e.p) + ",labeled-malicious\n";
            artifacts.put(manifest, "detect", dir + "pk.csv", pk);

            std::string sus =
                "entity_id,address,granularity,variant,p,classification,n_active,n_flagged\n";
            for (std::size_t i = 0; i < run.benign_report.entries.size(); ++i) {
                const PkEntry& e = run.benign_report.entries[i];
                if (e.n_flagged == 0) continue;
                const auto mit = mem.find(e.entity);
                static const std::vector<AddressId> kEmpty;
                const auto& addrs = mit == mem.end() ? kEmpty : mit->second;
                for (AddressId a : addrs)
                    sus += format_u64(e.entity) + "," + state.filtered.addresses().name(a) + "," +
                           granularity_name(g) + "," + std::to_string(v) + "," +
                           format_double(e.p) + "," +
                           classification_of(run.benign_report.classes[i]) + "," +
                           format_u64(e.n_active) + "," + format_u64(e.n_flagged) + "\n";
            }
            artifacts.put(manifest, "detect", dir + "suspects.csv", sus);

            for (const std::string& s : run.skipped)
                manifest.warnings.push_back(std::string("detect ") + granularity_name(g) + " v" +
                                            std::to_string(v) + " skipped segment " + s);
            detect_runs.emplace(std::make_pair(g, v), std::move(run));
        }

    // ---- report ----------------------------------------------------------
    {
        std::ostringstream summary;
        summary << kToolVersion << " run summary\n";
        summary << "config hash: " << manifest.config_hash << "\n\n";
        summary << "transactions: " << state.parsed.txs().size() << " parsed, "
                << state.filtered.txs().size() << " analyzable\n";
        summary << "addresses: " << state.parsed.addresses().size() << "\n";
        std::size_t n_entities = members.size();
        summary << "entities after clustering: " << n_entities << "\n\n";

        std::string counts_csv =
            "granularity,variant,suspect_entities,suspect_addresses,persistent_entities,"
            "persistent_addresses,behavior_changers,changers_in_band\n";
        for (const auto& [key, run] : detect_runs) {
            const auto& [g, v] = key;
            const auto& mem = v == 1 ? members_raw : members;
            std::size_t sus_e = 0, sus_a = 0, per_e = 0, per_a = 0;
            for (std::size_t i = 0; i < run.benign_report.entries.size(); ++i) {
                const PkEntry& e = run.benign_report.entries[i];
                if (e.n_flagged == 0) continue;
                const auto mit = mem.find(e.entity);
                const std::size_t n_addr = mit == mem.end() ? 0 : mit->second.size();
                ++sus_e;
                sus_a += n_addr;
                if (run.benign_report.classes[i] == BehaviorClass::PersistentSuspect) {
                    ++per_e;
                    per_a += n_addr;
                }
            }
            counts_csv += std::string(granularity_name(g)) + "," + std::to_string(v) + "," +
                          format_u64(sus_e) + "," + format_u64(sus_a) + "," + format_u64(per_e) +
                          "," + format_u64(per_a) + "," +
                          format_u64(run.benign_report.behavior_changers) + "," +
                          format_u64(run.benign_report.changers_in_band) + "\n";
            summary << granularity_name(g) << " v" << v << ": " << sus_e << " suspect entities ("
                    << sus_a << " addresses), " << per_e << " persistent, "
                    << run.benign_report.behavior_changers << " behavior-changers ("
                    << run.benign_report.changers_in_band << " in the 0.3..0.6 band)\n";
            if (sus_e == 0) summary << "  zero suspects in this configuration\n";
            for (const std::string& s : run.skipped) summary << "  skipped " << s << "\n";
        }
        artifacts.put(manifest, "report", "report/suspect_counts.csv", counts_csv);

        // p histograms per (granularity, variant)
        for (const auto& [key, run] : detect_runs) {
            const auto& [g, v] = key;
            std::map<std::string, std::pair<std::size_t, std::size_t>> freq;  // p -> (benign, malicious)
            for (const PkEntry& e : run.benign_report.entries) ++freq[format_double(e.p)].first;
            for (const PkEntry& e : run.malicious_entries) ++freq[format_double(e.p)].second;
            std::vector<std::pair<double, std::string>> order;
            for (const auto& [p, f] : freq) order.emplace_back(parse_double(p, "p"), p);
            std::sort(order.begin(), order.end());
            std::string csv = "p,benign_entities,malicious_entities\n";
            for (const auto& [pv, p] : order)
                csv += p + "," + format_u64(freq[p].first) + "," + format_u64(freq[p].second) + "\n";
            artifacts.put(manifest, "report",
                          std::string("report/p_hist_") + granularity_name(g) + "_v" +
                              std::to_string(v) + ".csv",
                          csv);
        }

        // cross-granularity persistent suspects per variant
        if (cfg.granularities.size() >= 2)
            for (int v : cfg.variants) {
                std::vector<std::set<std::uint32_t>> per_g;
                for (Granularity g : cfg.granularities) {
                    const auto& run = detect_runs.at({g, v});
                    std::set<std::uint32_t> s;
                    for (std::uint32_t e : persistent_entities(run.benign_report)) s.insert(e);
                    per_g.push_back(std::move(s));
                }
                std::set<std::uint32_t> common = per_g[0];
                for (std::size_t i = 1; i < per_g.size(); ++i) {
                    std::set<std::uint32_t> next;
                    std::set_intersection(common.begin(), common.end(), per_g[i].begin(),
                                          per_g[i].end(), std::inserter(next, next.begin()));
                    common = std::move(next);
                }
                std::string csv = "entity_id\n";
                for (std::uint32_t e : common) csv += format_u64(e) + "\n";
                artifacts.put(manifest, "report",
                              "report/cross_granularity_v" + std::to_string(v) + ".csv", csv);
                summary << "v" << v << ": " << common.size()
                        << " persistent suspects shared across granularities\n";
            }

        // fit tables and histograms
        std::string fit_table =
            "granularity,half,class,signal,winner,alpha,lambda,mu,sigma,ks,n_tail\n";
        const json fits = json::parse(read_file(cfg.outdir + "/fit/fits.json"));
        for (const auto& entry : fits["entries"]) {
            if (entry.contains("error")) continue;
            const std::string winner = entry["winner"].get<std::string>();
            const json& f = entry["fits"][winner];
            fit_table += entry["granularity"].get<std::string>() + "," +
                         std::to_string(entry["half"].get<int>()) + "," +
                         entry["class"].get<std::string>() + "," +
                         entry["signal"].get<std::string>() + "," + winner + "," +
                         format_double(f["alpha"].get<double>()) + "," +
                         format_double(f["lambda"].get<double>()) + "," +
                         format_double(f["mu"].get<double>()) + "," +
                         format_double(f["sigma"].get<double>()) + "," +
                         format_double(f["ks"].get<double>()) + "," +
                         format_u64(f["n_tail"].get<std::uint64_t>()) + "\n";
        }
        artifacts.put(manifest, "report", "report/fit_table.csv", fit_table);

        for (const auto& [key, hist] : fit_histograms) {
            std::string csv = "bin_lo,bin_hi,mass\n";
            for (std::size_t i = 0; i < hist.masses.size(); ++i)
                csv += format_double(hist.edges[i]) + "," + format_double(hist.edges[i + 1]) +
                       "," + format_double(hist.masses[i]) + "\n";
            artifacts.put(manifest, "report", "report/hist_" + key + ".csv", csv);
        }

        if (!manifest.warnings.empty()) {
            summary << "\nwarnings:\n";
            for (const std::string& w : manifest.warnings) summary << "  " << w << "\n";
        }
        artifacts.put(manifest, "report", "report/summary.txt", summary.str());
    }

    write_file(manifest_path, ManifestIo::dump(manifest));
    const auto t_end = std::chrono::steady_clock::now();
    log << "total wall time: "
        << std::chrono::duration_cast<std::chrono::milliseconds>(t_end - t_start).count()
        << " ms\n";
    write_file(cfg.outdir + "/logs/run.log", log.str());
    return manifest;
}

}  // namespace chainlens
