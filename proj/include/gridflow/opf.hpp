#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/case_io.hpp"
#include "gridflow/dataset_io.hpp"
#include "gridflow/grid_model.hpp"

namespace gridflow {

/// Nodal dc-OPF: minimize sum a_i p_i^2 + b_i p_i subject to 1'p = 0,
/// -f_max <= S p <= f_max and p_min <= p <= p_max. Nodes with
/// p_min == p_max are fixed injections.
struct DcOpfInstance {
    std::shared_ptr<const GridLinAlg> grid;
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd p_min;
    Eigen::VectorXd p_max;
    Eigen::VectorXd f_max;

    int n_buses() const { return static_cast<int>(a.size()); }
    bool flexible(int i) const { return p_max(i) > p_min(i); }
    std::vector<int> flexible_nodes() const;
};

enum class OpfStatus { Optimal, Infeasible, MaxIterations };

std::string to_string(OpfStatus status);

struct DcOpfSolution {
    OpfStatus status = OpfStatus::MaxIterations;
    Eigen::VectorXd p_star;
    Eigen::VectorXd f_star;
    double lambda = 0.0;
    Eigen::VectorXd mu_bar;
    Eigen::VectorXd mu_under;
    Eigen::VectorXd pi_star;
    double objective = 0.0;
    /// max of the stationarity, primal and complementarity residuals
    double kkt_residual = 0.0;
    int iterations = 0;
};

/// Nodal cost aggregation. Generators with a non-positive quadratic term get
/// a = fill * max(b, 1) / max(pmax, 1e-3) (per-unit), which keeps the nodal
/// optimum unique. A node with several units uses the cost of their combined
/// dispatch at equal marginal cost.
struct CostPolicy {
    double quadratic_fill = 0.1;
};

/// Per-bus multiplicative perturbations applied on top of the case data.
struct Perturbation {
    Eigen::VectorXd load_scale;
    Eigen::VectorXd cost_a_scale;
    Eigen::VectorXd cost_b_scale;
};

/// Per-node features [p_max, p_min, q_max, q_min, a, b] alongside the instance.
struct NodalData {
    DcOpfInstance instance;
    Eigen::VectorXd q_max;
    Eigen::VectorXd q_min;
};

inline const std::array<std::string, 6> kNodeFeatures = {"pmax", "pmin", "qmax", "qmin", "a", "b"};

NodalData make_nodal_data(const GridCase& grid_case, std::shared_ptr<const GridLinAlg> grid,
                          const Perturbation* perturbation = nullptr, const CostPolicy& policy = {});
DcOpfInstance make_instance(const GridCase& grid_case, std::shared_ptr<const GridLinAlg> grid,
                            const CostPolicy& policy = {});

/// Checks the instance invariants; throws Infeasible for an impossible
/// balance and DimensionMismatch for inconsistent sizes.
void validate_instance(const DcOpfInstance& inst);

/// Never throws for solver outcomes; inspect `status`.
DcOpfSolution solve_dcopf(const DcOpfInstance& inst);
/// solve_dcopf that raises Infeasible or MaxIterations.
DcOpfSolution solve_dcopf_or_throw(const DcOpfInstance& inst);

/// pi = lambda 1 - S'(mu_bar - mu_under).
Eigen::VectorXd lmp_from_duals(const DcOpfSolution& sol, const GridLinAlg& grid);

/// Stationarity residual max_i |2 a_i p_i + b_i - pi_i + box dual_i| over
/// flexible nodes, with the box dual taken from the active bound.
double kkt_stationarity(const DcOpfInstance& inst, const DcOpfSolution& sol);

inline constexpr double kBindingTolerance = 1e-5;
/// Primal binding test |f| >= f_max - 1e-5.
std::vector<char> binding_lines(const Eigen::VectorXd& flows, const Eigen::VectorXd& f_max);

struct FlowViolation {
    double total = 0.0;
    Eigen::VectorXd per_line;
};

FlowViolation dc_flow_violation(const Eigen::VectorXd& p, const GridLinAlg& grid, const Eigen::VectorXd& f_max);

struct ApparentFlow {
    Eigen::VectorXd from_to;
    Eigen::VectorXd to_from;
};

/// s_ij = |v_i e^{j theta_i} - v_j e^{j theta_j}| |v_i| |Y_ij| in both directions.
ApparentFlow ac_apparent_flow(const Eigen::VectorXd& vm, const Eigen::VectorXd& theta, const GridLinAlg& grid);

struct SampleSpec {
    int n_samples = 0;
    std::array<double, 2> load_scale_range = {0.85, 1.15};
    std::array<double, 2> cost_scale_range = {0.5, 1.5};
    std::uint64_t seed = 0;
    /// Zero-based branch rows taken out of service before sampling.
    std::vector<int> outaged_branches;
    CostPolicy cost_policy;
    /// 0 reads GRIDFLOW_THREADS, defaulting to 1.
    int threads = 0;
};

inline constexpr double kMaxRejectionRate = 0.2;

/// Labels "pi", "p" and "binding". Every accepted sample has a KKT residual
/// below 1e-6; other draws are rejected and redrawn from the next stream.
/// Throws TooManyRejections when more than 20% of draws are rejected.
DatasetFile generate_dataset(const GridCase& grid_case, const SampleSpec& spec);

}  // namespace gridflow
