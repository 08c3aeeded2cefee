#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/autodiff.hpp"

namespace gridflow {

enum class FrMode { None, Dc, Ac };

std::string to_string(FrMode mode);
FrMode parse_fr_mode(const std::string& text);

struct LossConfig {
    double gamma_pi = 1.0;
    double gamma_v = 1.0;
    double gamma_fr = 1.0;
    /// Weight of the auxiliary injection error ||p* - p||^2 (per-unit).
    double gamma_p = 0.0;
    bool use_linf_pi = false;
    double linf_temperature = 1e-2;
    FrMode fr_mode = FrMode::None;
    /// Line indices the penalty covers; empty means every line.
    std::vector<int> active_lines;
    /// Sigmoid sharpness of the soft projection during training.
    double sharpness = 100.0;
    /// Replace the hinge by sigma(k z) z.
    bool smooth_hinge = false;
    double hinge_sharpness = 1e4;
};

void validate(const LossConfig& config);

/// Batch mean of the per-sample hinge-l1 excess. With two_sided the excess is
/// |f| - limit, otherwise value - limit. values is B x L over all lines.
ad::Var fr_penalty(const ad::Var& values, const Eigen::VectorXd& limits, const std::vector<int>& active_lines,
                   bool two_sided, bool smooth = false, double sharpness = 1e4);

/// Predictions and targets in standardized units, B x N per channel.
struct LossInputs {
    std::map<std::string, ad::Var> predictions;
    std::map<std::string, Eigen::MatrixXd> targets;
    /// Feasibility penalty, already averaged over the batch; may be empty.
    ad::Var fr;
    /// Optional per-unit injections for the auxiliary term.
    ad::Var p_hat;
    Eigen::MatrixXd p_target;
};

struct LossTerms {
    ad::Var total;
    double label = 0.0;
    double linf = 0.0;
    double fr = 0.0;
    double aux_p = 0.0;
};

/// gamma_pi * mean_b ||pi - pi*||^2 (+ gamma_v term when a "vm" channel is
/// predicted or fr_mode is Ac) (+ smooth max of the squared price errors)
/// + gamma_fr * fr + gamma_p * mean_b ||p - p*||^2. Throws MissingChannel.
LossTerms composite_loss(const LossInputs& inputs, const LossConfig& config);

}  // namespace gridflow
