#include "gridflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "gridflow/error.hpp"

namespace gridflow {

EigenBasis eigendecompose_spd(const Eigen::MatrixXd& m)
{
    if (m.rows() != m.cols() || m.rows() == 0) throw Error(ErrorCode::ShapeMismatch, "matrix must be square");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw Error(ErrorCode::NotSymmetric, "matrix is not symmetric within 1e-10");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
    if (solver.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "eigen solver did not converge");
    if (solver.eigenvalues().minCoeff() <= 0.0) {
        throw Error(ErrorCode::NotPositiveDefinite, "matrix has a non-positive eigenvalue");
    }
    const int n = static_cast<int>(m.rows());
    EigenBasis basis;
    basis.values.resize(n);
    basis.vectors.resize(n, n);
    // Eigen returns ascending order
    for (int i = 0; i < n; ++i) {
        basis.values(i) = solver.eigenvalues()(n - 1 - i);
        Eigen::VectorXd v = solver.eigenvectors().col(n - 1 - i);
        Eigen::Index k = 0;
        v.cwiseAbs().maxCoeff(&k);
        if (v(k) < 0.0) v = -v;
        basis.vectors.col(i) = v;
    }
    return basis;
}

SubspaceNorm parse_subspace_norm(const std::string& name)
{
    if (name == "frobenius" || name == "fro") return SubspaceNorm::Frobenius;
    if (name == "spectral" || name == "l2") return SubspaceNorm::Spectral;
    throw Error(ErrorCode::BadConfig, "unknown subspace norm '" + name + "'");
}

namespace {

void require_orthonormal(const Eigen::MatrixXd& u)
{
    const Eigen::MatrixXd gram = u.transpose() * u;
    if ((gram - Eigen::MatrixXd::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff() > 1e-8) {
        throw Error(ErrorCode::NotOrthonormal, "basis columns are not orthonormal");
    }
}

}  // namespace

double subspace_distance(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, SubspaceNorm norm)
{
    if (u.rows() != v.rows() || u.cols() != v.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "subspace bases must have equal shape");
    }
    require_orthonormal(u);
    require_orthonormal(v);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(u.transpose() * v);
    double fro2 = 0.0;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
        const double sigma = std::clamp(svd.singularValues()(i), 0.0, 1.0);
        const double sine2 = 1.0 - sigma * sigma;
        fro2 += sine2;
        worst = std::max(worst, sine2);
    }
    return norm == SubspaceNorm::Frobenius ? std::sqrt(fro2) : std::sqrt(worst);
}

SeparationConstants separation_constants(const EigenBasis& basis, int s)
{
    const int n = basis.size();
    if (s < 1 || s > n) throw Error(ErrorCode::DimensionMismatch, "subspace dimension out of range");
    if (n < 2) throw Error(ErrorCode::DegenerateSpectrum, "need at least two eigenvalues");
    constexpr double inf = std::numeric_limits<double>::infinity();
    SeparationConstants c;
    c.s = s;
    c.delta_interior = inf;
    c.delta_prime_interior = inf;
    const auto& lam = basis.values;
    for (int i = 0; i + 1 < s; ++i) {
        c.delta_interior = std::min(c.delta_interior, lam(i) - lam(i + 1));
        c.delta_prime_interior = std::min(c.delta_prime_interior, 1.0 / lam(i + 1) - 1.0 / lam(i));
    }
    c.delta = c.delta_interior;
    c.delta_prime = c.delta_prime_interior;
    if (s < n) {
        c.delta = std::min(c.delta, lam(s - 1) - lam(s));
        c.delta_prime = std::min(c.delta_prime, 1.0 / lam(s) - 1.0 / lam(s - 1));
    }
    if (!(c.delta > kDegenerateGap) || !(c.delta_prime > kDegenerateGap) || !std::isfinite(c.delta)) {
        throw Error(ErrorCode::DegenerateSpectrum, "eigen-gap below 1e-12 for s = " + std::to_string(s));
    }
    return c;
}

BoundTerms dk_bound_terms(const GridLinAlg& grid, const std::vector<int>& lines, const SeparationConstants& c,
                          SubspaceNorm norm)
{
    if (!(c.delta > kDegenerateGap) || !(c.delta_prime > kDegenerateGap)) {
        throw Error(ErrorCode::DegenerateSpectrum, "separation constants are degenerate");
    }
    if (lines.empty()) return {};
    Eigen::MatrixXd delta;
    if (lines.size() == 1) {
        delta = rank_one_inverse_update(grid, lines.front()).delta;
    } else {
        try {
            delta = apply_outage(grid, lines).post_grid.b_inv - grid.b_inv;
        } catch (const IslandError& e) {
            throw Error(ErrorCode::BridgeLine, e.what());
        }
    }
    const bool fro = norm == SubspaceNorm::Frobenius;
    BoundTerms t;
    if (fro) {
        t.delta_norm = delta.norm();
    } else {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(delta);
        t.delta_norm = svd.singularValues()(0);
    }
    t.inverse_term = (fro ? 1.0 : 2.0) * t.delta_norm / c.delta;
    for (int k : lines) t.laplacian_term += (fro ? 2.0 : 4.0) / (grid.reactance(k) * c.delta_prime);
    return t;
}

double dk_bound(const GridLinAlg& grid, int line, const SeparationConstants& constants, SubspaceNorm norm)
{
    return dk_bound_terms(grid, {line}, constants, norm).bound();
}

double spectral_energy_fraction(const EigenBasis& basis, int s)
{
    if (s < 1 || s > basis.size()) throw Error(ErrorCode::DimensionMismatch, "subspace dimension out of range");
    if (s == basis.size()) return 1.0;
    return basis.values.head(s).sum() / basis.values.sum();
}

SubspaceChoice choose_subspace_dimension(const EigenBasis& basis, double energy, double min_gap)
{
    const int n = basis.size();
    SubspaceChoice choice;
    choice.s = n;
    for (int s = 1; s <= n; ++s) {
        if (spectral_energy_fraction(basis, s) >= energy) {
            choice.s = s;
            break;
        }
    }
    const int initial = choice.s;
    while (choice.s > 1 && choice.s < n && basis.values(choice.s - 1) - basis.values(choice.s) <= min_gap) {
        --choice.s;
    }
    choice.energy = spectral_energy_fraction(basis, choice.s);
    if (choice.s != initial) {
        std::ostringstream note;
        note << "s shrunk from " << initial << " to " << choice.s << " to avoid a degenerate boundary gap";
        choice.note = note.str();
    }
    return choice;
}

SpectralScenario analyze_outage(const GridLinAlg& grid, const EigenBasis& basis, const std::vector<int>& lines, int s)
{
    SpectralScenario sc;
    sc.lines = lines;
    sc.s = s;
    sc.constants = separation_constants(basis, s);
    Contingency post = apply_outage(grid, lines);
    EigenBasis perturbed = eigendecompose_spd(post.post_grid.b_inv);
    const Eigen::MatrixXd delta = post.post_grid.b_inv - grid.b_inv;
    sc.delta_fro = delta.norm();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(delta);
    sc.delta_l2 = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    sc.distance_fro = subspace_distance(basis.leading(s), perturbed.leading(s), SubspaceNorm::Frobenius);
    sc.distance_l2 = subspace_distance(basis.leading(s), perturbed.leading(s), SubspaceNorm::Spectral);
    sc.bound_fro = dk_bound_terms(grid, lines, sc.constants, SubspaceNorm::Frobenius);
    sc.bound_l2 = dk_bound_terms(grid, lines, sc.constants, SubspaceNorm::Spectral);
    return sc;
}

}  // namespace gridflow
