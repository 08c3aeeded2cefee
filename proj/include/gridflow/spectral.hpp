#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/grid_model.hpp"

namespace gridflow {

/// Eigenpairs of a symmetric positive-definite matrix, values in
/// non-increasing order. Each eigenvector has its largest-magnitude entry
/// positive.
struct EigenBasis {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;

    int size() const { return static_cast<int>(values.size()); }
    Eigen::MatrixXd leading(int s) const { return vectors.leftCols(s); }
};

EigenBasis eigendecompose_spd(const Eigen::MatrixXd& m);

enum class SubspaceNorm { Frobenius, Spectral };

SubspaceNorm parse_subspace_norm(const std::string& name);

/// || sin Theta || between span(u) and span(v) from the principal angles.
double subspace_distance(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, SubspaceNorm norm);

/// Eigen-gap constants for the leading s-dimensional subspace. `delta` and
/// `delta_prime` take the minimum over 1 <= i <= s, i.e. including the
/// boundary gap lambda_s - lambda_{s+1}; the `_interior` variants stop at
/// i = s - 1 (and are +inf for s = 1).
struct SeparationConstants {
    int s = 1;
    double delta = 0.0;
    double delta_prime = 0.0;
    double delta_interior = 0.0;
    double delta_prime_interior = 0.0;
};

inline constexpr double kDegenerateGap = 1e-12;

SeparationConstants separation_constants(const EigenBasis& basis, int s);

/// Both terms of the subspace perturbation bound for an outage of the given
/// lines. For a single line k the terms are ||Delta_k||_F / delta and
/// 2 / (x_k delta') (Frobenius) or 2 ||Delta_k||_2 / delta and 4 / (x_k delta')
/// (spectral). Several lines use the exact inverse difference and sum the
/// per-line B-side terms.
struct BoundTerms {
    double delta_norm = 0.0;     ///< ||Delta|| in the requested norm
    double inverse_term = 0.0;   ///< perturbation of B^-1 over delta
    double laplacian_term = 0.0; ///< perturbation of B over delta'
    double bound() const { return inverse_term < laplacian_term ? inverse_term : laplacian_term; }
};

BoundTerms dk_bound_terms(const GridLinAlg& grid, const std::vector<int>& lines, const SeparationConstants& constants,
                          SubspaceNorm norm);
double dk_bound(const GridLinAlg& grid, int line, const SeparationConstants& constants, SubspaceNorm norm);

double spectral_energy_fraction(const EigenBasis& basis, int s);

/// Smallest s whose leading eigenvalues hold at least `energy` of the trace,
/// shrunk while the boundary gap is at or below `min_gap`. `note` records any
/// shrinking for reports.
struct SubspaceChoice {
    int s = 1;
    double energy = 0.0;
    std::string note;
};

SubspaceChoice choose_subspace_dimension(const EigenBasis& basis, double energy = 0.5, double min_gap = 1e-8);

/// Full perturbation diagnostics for one outage scenario.
struct SpectralScenario {
    std::vector<int> lines;
    int s = 0;
    SeparationConstants constants;
    double delta_fro = 0.0;
    double delta_l2 = 0.0;
    double distance_fro = 0.0;
    double distance_l2 = 0.0;
    BoundTerms bound_fro;
    BoundTerms bound_l2;
};

SpectralScenario analyze_outage(const GridLinAlg& grid, const EigenBasis& basis, const std::vector<int>& lines, int s);

}  // namespace gridflow
