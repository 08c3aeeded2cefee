#pragma once

#include <Eigen/Dense>

#include "gridflow/autodiff.hpp"
#include "gridflow/grid_model.hpp"

namespace gridflow {

/// Per-sample nodal data the chain needs, one row per sample (B x N), in
/// per-unit. Fixed nodes have p_min == p_max and bypass the price map.
struct ChainInputs {
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;
    Eigen::MatrixXd p_min;
    Eigen::MatrixXd p_max;

    int batch() const { return static_cast<int>(a.rows()); }
    Eigen::MatrixXd flexible() const;
};

inline constexpr double kDefaultSharpness = 100.0;

/// p = clamp((pi - b) / (2a), p_min, p_max); fixed nodes return p_min.
Eigen::MatrixXd hard_projection(const Eigen::MatrixXd& pi, const ChainInputs& in);

/// Sigmoid-smoothed clamp with sigma(z) = 1 / (1 + exp(-k z)):
///   r' = sigma(p_min - r) (p_min - r) + r
///   p  = sigma(p_max - r') (r' - p_max) + p_max
ad::Var soft_projection(const ad::Var& pi, const ChainInputs& in, double sharpness = kDefaultSharpness);
/// Scalar form of the same map.
double soft_clamp(double r, double lo, double hi, double sharpness);

/// f = S p for a batch of injections (B x N -> B x L).
ad::Var dc_flows(const ad::Var& p, const GridLinAlg& grid);

/// theta = B^-1 p over the non-reference buses, zero at the reference (B x N).
ad::Var dc_angles(const ad::Var& p, const GridLinAlg& grid);

struct AcLineFlows {
    ad::Var from_to;
    ad::Var to_from;
};

/// Apparent-power magnitudes |v_i e^{j th_i} - v_j e^{j th_j}| |v_end| |Y| per line.
AcLineFlows ac_flows(const ad::Var& vm, const ad::Var& theta, const GridLinAlg& grid);

struct DcChain {
    ad::Var p;
    ad::Var flows;
};

struct AcChain {
    ad::Var p;
    ad::Var theta;
    AcLineFlows s;
};

/// pi -> p -> f. soft = false uses the hard clamp (no gradient through the
/// clamp's saturated entries).
DcChain latent_chain_dc(const ad::Var& pi, const ChainInputs& in, const GridLinAlg& grid, bool soft,
                        double sharpness = kDefaultSharpness);
/// pi, |v| -> p -> theta -> s.
AcChain latent_chain_ac(const ad::Var& pi, const ad::Var& vm, const ChainInputs& in, const GridLinAlg& grid,
                        bool soft, double sharpness = kDefaultSharpness);

}  // namespace gridflow
