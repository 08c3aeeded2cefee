#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridflow/checkpoint.hpp"
#include "gridflow/models.hpp"

namespace gridflow {

/// z-scoring fitted on a training split. Features are scaled per selected
/// dataset feature (pooled over nodes), labels per channel.
struct Standardizer {
    std::vector<std::string> feature_names;
    Eigen::RowVectorXd feature_mean;
    Eigen::RowVectorXd feature_std;
    std::map<std::string, double> label_mean;
    std::map<std::string, double> label_std;

    bool operator==(const Standardizer&) const = default;
};

/// A model plus everything needed to apply it to raw dataset rows.
struct TrainedModel {
    std::unique_ptr<Model> model;
    Standardizer scaler;
    /// Free-form training provenance (config, epochs, config hash).
    nlohmann::json info = nlohmann::json::object();

    TrainedModel() = default;
    TrainedModel(const TrainedModel& other);
    TrainedModel& operator=(const TrainedModel& other);
    TrainedModel(TrainedModel&&) = default;
    TrainedModel& operator=(TrainedModel&&) = default;

    GnnModel* gnn() const { return dynamic_cast<GnnModel*>(model.get()); }
};

inline constexpr int kModelFormatVersion = 1;

Checkpoint to_checkpoint(const TrainedModel& trained);
/// Throws VersionMismatch for another model format and ShapeMismatch when an
/// array disagrees with the declared architecture.
TrainedModel from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::filesystem::path& path, const TrainedModel& trained);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace gridflow
