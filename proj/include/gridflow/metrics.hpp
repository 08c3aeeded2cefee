#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gridflow/grid_model.hpp"

namespace gridflow {

/// Mean and population standard deviation of the per-sample nmse
/// ||yhat - y||^2 / ||y||^2 (one sample per row). Rows with y = 0 are skipped.
struct NmseStats {
    double mean = 0.0;
    double std = 0.0;
    int count = 0;
};

/// column_mask, when non-empty, has the shape of y and selects the entries
/// that take part (1) or not (0).
NmseStats nmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
               const Eigen::MatrixXd& column_mask = Eigen::MatrixXd());

/// Mean over samples of sum_l max(0, |f_l| - f_max_l) / f_max_l, divided by
/// the number of lines. flows is B x L.
double dc_violation_rate(const Eigen::MatrixXd& flows, const Eigen::VectorXd& f_max);
/// Same on apparent power in both directions, divided by 2L.
double ac_violation_rate(const Eigen::MatrixXd& from_to, const Eigen::MatrixXd& to_from, const Eigen::VectorXd& s_max);

struct BinaryMetrics {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    int tn = 0;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

/// recall = tp / (tp + fn), f1 = 2 tp / (2 tp + fp + fn). Throws
/// NoBindingEvents when the truth has no positives.
BinaryMetrics binary_metrics(const std::vector<char>& truth, const std::vector<char>& predicted);

struct ClassificationSummary {
    std::vector<BinaryMetrics> per_line;
    /// Lines left out of the macro average because they never bind in the
    /// evaluated samples.
    std::vector<int> skipped;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

/// truth and predicted are B x K 0/1 matrices.
ClassificationSummary classification_summary(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted);

}  // namespace gridflow
