#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridflow/congestion.hpp"
#include "gridflow/opf.hpp"
#include "gridflow/training.hpp"

namespace gridflow {

struct TransferSection {
    /// Outage scenarios as zero-based branch rows (one-based in files and flags).
    std::vector<std::vector<int>> scenarios;
    /// Retraining samples per scenario; 0 means half of the original run.
    int samples = 0;
    std::uint64_t seed = 1;
    int max_epochs = 10;
    int spectral_s = 10;
    /// When no scenario is listed, pick this many from the top binding lines.
    int auto_scenarios = 3;
    int pair_pool = 8;
};

struct SpectralSection {
    /// 0 picks s by the energy rule.
    int s = 0;
    double energy = 0.5;
};

/// Everything a run reads from its config file. Relative paths are resolved
/// against the directory of the config file.
struct RunConfig {
    std::string run_id = "run";
    std::filesystem::path case_path;
    std::filesystem::path dataset_path;
    std::filesystem::path model_path;
    std::filesystem::path out_dir = ".";
    SampleSpec sample;
    TrainConfig train;
    int congestion_top_k = 10;
    double congestion_max_pos_weight = 20.0;
    TransferSection transfer;
    SpectralSection spectral;
};

/// Strict: unknown keys and wrongly typed values raise BadConfig.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// FNV-1a 64 of the canonical JSON of every setting except file locations, as
/// 16 hex digits. Moving the files around does not change it.
std::string config_hash(const RunConfig& config);

/// BadConfig unless the file exists.
void require_file(const std::filesystem::path& path, const std::string& what);

/// "7,104" -> {6, 103}. BadConfig on anything but positive integers.
std::vector<int> parse_branch_list(const std::string& text);

CongestionConfig congestion_config(const RunConfig& config);

}  // namespace gridflow
