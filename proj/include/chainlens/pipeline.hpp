#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chainlens/detect.hpp"
#include "chainlens/entities.hpp"
#include "chainlens/features.hpp"
#include "chainlens/graphs.hpp"
#include "chainlens/rpc.hpp"
#include "chainlens/statfit.hpp"
#include "chainlens/synthgen.hpp"
#include "chainlens/txstore.hpp"

namespace chainlens {

inline constexpr const char* kToolVersion = "chainlens 0.1.0";

struct PipelineConfig {
    std::string input;   // transactions jsonl
    std::string labels;  // label csv; optional
    std::string outdir = "out";

    std::string rpc_url, rpc_user, rpc_pass;
    std::uint32_t from_height = 0, to_height = 0;

    std::vector<Granularity> granularities{Granularity::FifteenDays, Granularity::OneMonth};
    std::vector<int> variants{1, 2, 3};
    HeuristicConfig heuristics;
    std::uint32_t k = 10;
    double epsilon = 12.0;  // inside every band the sweep renders usable
    std::uint64_t seed = 42;
    SummaryStats stats;
    std::uint32_t attract_window = 144;
    double x_min = 2.3;
    std::string reference;  // histogram reference file for cross-chain KLD
    int threads = 0;
};

PipelineConfig load_pipeline_config(const std::string& path);
void apply_config_line(PipelineConfig& cfg, const std::string& key, const std::string& value);
std::string render_config(const PipelineConfig& cfg);  // canonical key=value form
std::string config_hash(const PipelineConfig& cfg);

struct RunManifest {
    std::string config_hash;
    std::map<std::string, std::string> config_values;  // resolved analysis parameters
    std::string tool_version;
    // stage -> (input signature, artifact path -> checksum)
    std::map<std::string, std::pair<std::string, std::map<std::string, std::string>>> stages;
    std::vector<std::string> warnings;
    bool up_to_date = false;  // previous run matched; nothing recomputed
};

RunManifest run_pipeline(const PipelineConfig& cfg);

// Per-entity outcome of one (granularity, variant) detection run.
struct DetectionOutcome {
    SuspectReport report;
    std::vector<std::string> skipped_segments;  // label + reason
    std::map<std::uint32_t, std::vector<double>> sweep_counts;  // segment index -> counts over the grid
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace chainlens
