#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridflow/grid_model.hpp"
#include "gridflow/spectral.hpp"
#include "gridflow/training.hpp"

namespace gridflow {

struct TransferConfig {
    /// Retraining settings; the split and stopping rules apply to the new dataset.
    TrainConfig train;
    /// Leading eigenvectors compared in the spectral report; 0 picks s by the
    /// 50% energy rule.
    int spectral_s = 10;
    /// Sample count of the original training run; when > 0 the new dataset
    /// may hold at most half of it.
    int original_samples = 0;
    std::string scenario_id;
};

TransferConfig default_transfer_config();

struct TransferReport {
    std::string scenario_id;
    /// Indices into the pre-outage line list and the matching zero-based case
    /// branch rows (reported one-based as "branches").
    std::vector<int> outaged_lines;
    std::vector<int> outaged_branches;
    int samples = 0;
    EvalReport pre_trained;
    EvalReport re_trained;
    int retrain_epochs = 0;
    double retrain_seconds = 0.0;
    double delta_h = 0.0;
    std::optional<SpectralScenario> spectral;
    std::string spectral_note;
};

nlohmann::json to_json(const TransferReport& report, bool with_timing = false);

struct TransferResult {
    TrainedModel model;
    TransferReport report;
};

/// Mask surgery on a copy of the model, evaluation on the test split of
/// new_data ("pre-trained"), warm-start retraining on its training split and a
/// second evaluation ("re-trained"), plus the spectral diagnostics of the
/// outage. new_data must be generated on the post-outage grid. Throws
/// WouldDisconnect and DimensionMismatch.
TransferResult topology_transfer(const TrainedModel& model, const GridLinAlg& grid, const std::vector<int>& outaged_lines,
                                 const DatasetFile& new_data, const TransferConfig& config);

/// (1/T) sum_t ||H_t - H0_t||_2 / ||H0_t||_2 over the GNN feature filters.
/// Throws ShapeMismatch when the layer structures differ.
double filter_perturbation(const Model& original, const Model& transferred);

/// Line pairs among the `pool` most frequently binding lines whose joint
/// outage keeps the grid connected, in order of the pair's frequency ranks.
std::vector<std::vector<int>> candidate_outage_pairs(const GridLinAlg& grid, const Eigen::VectorXd& frequency, int pool);

}  // namespace gridflow
