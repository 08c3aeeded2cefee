#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridflow/adam.hpp"
#include "gridflow/dataset_io.hpp"
#include "gridflow/grid_model.hpp"
#include "gridflow/latent_chain.hpp"
#include "gridflow/loss.hpp"
#include "gridflow/model_io.hpp"
#include "gridflow/models.hpp"

namespace gridflow {

struct TrainConfig {
    ModelKind kind = ModelKind::Gnn;
    /// d_0 ... d_T; d_0 must equal features.size().
    std::vector<int> widths = {4, 5, 10, 10, 5, 5};
    std::vector<std::string> features = {"pmax", "pmin", "a", "b"};
    LossConfig loss;
    /// When > 0 the feasibility penalty covers the k lines that bind most
    /// often in the training split instead of loss.active_lines.
    int fr_top_k = 0;
    AdamConfig adam;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 10;
    double min_delta = 1e-4;
    /// Share of all samples used for training (the rest is the test split).
    double train_fraction = 0.8;
    /// Share of the training split held out for early stopping.
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);

struct Split {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;
};

/// Seeded permutation; train gets round(n * train_fraction) samples minus the
/// validation share, test gets the rest.
Split split_dataset(int n_samples, double train_fraction, double validation_fraction, std::uint64_t seed);

/// Fit feature and label z-scores on the given rows.
Standardizer fit_standardizer(const DatasetFile& data, const std::vector<int>& rows,
                              const std::vector<std::string>& features, const std::vector<std::string>& labels);

/// Standardized model inputs B x (N d) for the given rows.
Eigen::MatrixXd model_inputs(const DatasetFile& data, const std::vector<int>& rows, const Standardizer& scaler);

/// Raw per-unit cost and limit data of the given rows (features pmax, pmin, a, b).
ChainInputs chain_inputs(const DatasetFile& data, const std::vector<int>& rows);

/// Empirical binding frequency per line over the given rows.
Eigen::VectorXd binding_frequency(const DatasetFile& data, const std::vector<int>& rows);
/// Indices of the k most frequently binding lines (ties by index).
std::vector<int> top_binding_lines(const Eigen::VectorXd& frequency, int k);

struct History {
    std::vector<double> train_loss;
    /// validation_loss[0] is the loss of the starting point.
    std::vector<double> validation_loss;
    int epochs = 0;
    int best_epoch = 0;
};

/// Binary targets for a logit head: one column per listed line.
struct ClassifierTarget {
    std::vector<int> lines;
    Eigen::RowVectorXd pos_weight;
};

/// Mini-batch Adam on train_rows with early stopping on val_rows (train_rows
/// when empty). The best validation state, including the starting point, is
/// kept. Throws Diverged on a non-finite loss.
History fit(TrainedModel& trained, const DatasetFile& data, const GridLinAlg& grid,
            const std::vector<int>& train_rows, const std::vector<int>& val_rows, const TrainConfig& config,
            const ClassifierTarget* classifier = nullptr);

struct EvalReport {
    int n_samples = 0;
    double nmse_pi = 0.0;
    double std_pi = 0.0;
    bool has_v = false;
    double nmse_v = 0.0;
    double std_v = 0.0;
    double nmse_g = 0.0;
    double std_g = 0.0;
    double feasibility_violation = 0.0;
    /// Same rate for the labelled injections (0 for solver labels).
    double label_violation = 0.0;
    bool has_classification = false;
    double recall = 0.0;
    double f1 = 0.0;
    int epochs = 0;
    double train_seconds = 0.0;
};

/// Wall-clock time is left out unless asked for, so reports of identical runs
/// are byte-identical.
nlohmann::json to_json(const EvalReport& report, bool with_timing = false);

/// Hard-projected evaluation on the given rows. Throws EmptyTestSet and
/// DimensionMismatch.
EvalReport evaluate(TrainedModel& trained, const DatasetFile& data, const GridLinAlg& grid,
                    const std::vector<int>& rows);

/// Raw-unit predictions of every regression head for the given rows.
std::map<std::string, Eigen::MatrixXd> predict(TrainedModel& trained, const DatasetFile& data,
                                               const std::vector<int>& rows);

struct TrainResult {
    TrainedModel model;
    EvalReport report;
    History history;
    Split split;
};

/// Split, standardize on the training rows, fit and evaluate on the test
/// rows. With warm_start the model and its standardization are reused.
TrainResult train(const DatasetFile& data, const GridLinAlg& grid, const TrainConfig& config,
                  const TrainedModel* warm_start = nullptr);

/// DimensionMismatch unless the dataset was generated on this grid.
void check_dataset_matches(const DatasetFile& data, const GridLinAlg& grid);

}  // namespace gridflow
