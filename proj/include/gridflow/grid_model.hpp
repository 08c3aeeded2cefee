#pragma once

#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gridflow/case_io.hpp"

namespace gridflow {

/// Boolean N x N support pattern of the GNN graph filters: the diagonal plus
/// both directions of every live adjacency. Parallel branches collapse to one
/// adjacency.
class GraphMask {
public:
    GraphMask() = default;
    GraphMask(int n, const std::vector<std::pair<int, int>>& edges);

    int size() const { return n_; }
    int nnz() const { return static_cast<int>(entries_.size()); }
    bool contains(int i, int j) const { return dense_[static_cast<std::size_t>(i) * n_ + j] != 0; }
    /// Row-major sorted (i, j) list of the support.
    const std::vector<std::pair<int, int>>& entries() const { return entries_; }
    /// 0/1 matrix.
    Eigen::MatrixXd as_matrix() const;

    friend bool operator==(const GraphMask& a, const GraphMask& b) { return a.n_ == b.n_ && a.entries_ == b.entries_; }

private:
    int n_ = 0;
    std::vector<std::pair<int, int>> entries_;
    std::vector<char> dense_;
};

struct Line {
    int branch_row = 0;  ///< zero-based row in the case branch block
    int from = 0;        ///< bus index
    int to = 0;          ///< bus index
    double reactance = 0.0;
    double admittance = 0.0;
    double limit = 0.0;
};

/// Topology-derived linear algebra of the live network. Immutable once built.
struct GridLinAlg {
    int n_buses = 0;
    int ref_index = 0;
    std::vector<int> bus_ids;
    std::vector<Line> lines;

    Eigen::MatrixXd incidence;  ///< L x (N-1): +1 at from, -1 at to, reference column removed
    Eigen::VectorXd reactance;  ///< L
    Eigen::MatrixXd b_reduced;  ///< (N-1) x (N-1) = A^T X^-1 A
    Eigen::MatrixXd b_inv;      ///< dense inverse of b_reduced
    Eigen::MatrixXd isf;        ///< L x N, zero column at the reference bus
    GraphMask mask;
    std::shared_ptr<const Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> factor;

    int n_lines() const { return static_cast<int>(lines.size()); }
    /// Position of a bus in reduced coordinates, -1 for the reference bus.
    int reduced_index(int bus) const { return bus == ref_index ? -1 : (bus < ref_index ? bus : bus - 1); }
    /// Full L x N incidence (reference column kept).
    Eigen::MatrixXd full_incidence() const;
    /// Line limits as a vector.
    Eigen::VectorXd limits() const;
    /// Reduced injections (reference entry dropped) from a full N-vector.
    Eigen::VectorXd reduce(const Eigen::VectorXd& full) const;
    /// Full N-vector with zero at the reference from a reduced vector.
    Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;
    /// Solve B x = rhs with the sparse factorization.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
};

GridLinAlg build_linalg(const GridCase& grid_case);
GridLinAlg build_linalg(int n_buses, int ref_index, std::vector<int> bus_ids, std::vector<Line> lines);

struct Contingency {
    std::vector<int> outaged_lines;  ///< indices into the pre-outage line list
    std::vector<int> surviving;      ///< post-outage line -> pre-outage line index
    GridLinAlg post_grid;
};

/// Rebuild the linear algebra over the surviving lines. Throws WouldDisconnect
/// (IslandError) when the remaining graph splits.
Contingency apply_outage(const GridLinAlg& grid, const std::vector<int>& lines);

/// Islands (bus index lists) of the graph with the given lines removed.
std::vector<std::vector<int>> islands_without(const GridLinAlg& grid, const std::vector<int>& lines);

struct RankOneUpdate {
    Eigen::MatrixXd delta;
    Eigen::MatrixXd updated_inverse;
    double denominator = 0.0;
};

inline constexpr double kBridgeTolerance = 1e-12;

/// Inverse of B after removing line k via the Sherman-Morrison identity:
/// delta = B^-1 a a^T B^-1 / (x_k - a^T B^-1 a). Throws BridgeLine when the
/// denominator is at or below kBridgeTolerance.
RankOneUpdate rank_one_inverse_update(const GridLinAlg& grid, int line);

/// Generic rank-one inverse update of (B + sign * a a^T / x)^-1 given B^-1.
/// sign = -1 removes a branch, +1 adds one.
RankOneUpdate sherman_morrison(const Eigen::MatrixXd& inverse, const Eigen::VectorXd& a, double reactance, int sign);

const GraphMask& gnn_mask(const GridLinAlg& grid);

/// Linearized voltage-magnitude response to a reactive injection change on the
/// non-reference buses: dv = -B^-1 dq.
Eigen::VectorXd fdpf_voltage_sensitivity(const GridLinAlg& grid, const Eigen::VectorXd& dq);

}  // namespace gridflow
