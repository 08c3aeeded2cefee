#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gridflow/metrics.hpp"
#include "gridflow/training.hpp"

namespace gridflow {

struct CongestionConfig {
    /// Trunk widths, optimizer and stopping rules; the loss part is unused.
    TrainConfig train;
    int top_k = 10;
    /// Cap on the positive-class weight (1 - f) / f of rarely binding lines.
    double max_pos_weight = 20.0;
};

void validate(const CongestionConfig& config);

struct CongestionResult {
    TrainedModel model;
    /// Line indices of the classifier outputs, most frequent first.
    std::vector<int> active_lines;
    /// Binding frequency of active_lines on the training split.
    Eigen::VectorXd train_frequency;
    /// Test-split metrics; a line is predicted binding when its logit is > 0.
    ClassificationSummary summary;
    EvalReport report;
    History history;
    Split split;
};

/// GNN trunk with a dense logit layer over the top-K most frequently binding
/// lines of the training split, trained with weighted binary cross-entropy.
/// Throws NoBindingEvents when an active line never binds in training data.
CongestionResult congestion_classify(const DatasetFile& data, const GridLinAlg& grid, const CongestionConfig& config);

}  // namespace gridflow
