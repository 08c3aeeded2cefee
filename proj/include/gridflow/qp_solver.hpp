#pragma once

#include <Eigen/Dense>

namespace gridflow {

/// Convex QP with a diagonal Hessian:
///   minimize 0.5 x'diag(q)x + c'x  subject to  E x = e,  G x <= h.
struct QpProblem {
    Eigen::VectorXd q;
    Eigen::VectorXd c;
    Eigen::MatrixXd E;
    Eigen::VectorXd e;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
};

struct QpOptions {
    double tolerance = 1e-10;
    int max_iterations = 120;
    bool polish = true;
};

enum class QpStatus { Optimal, MaxIterations };

/// Primal-dual solution. Stationarity reads
///   diag(q) x + c + E'y + G'z = 0,  z >= 0,  z .* (h - Gx) = 0.
struct QpResult {
    QpStatus status = QpStatus::MaxIterations;
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd z;
    int iterations = 0;
    bool polished = false;
    double stationarity = 0.0;
    double primal_residual = 0.0;
    double complementarity = 0.0;
};

/// Mehrotra predictor-corrector interior point on the normal equations,
/// optionally followed by an active-set polish that solves the equality
/// KKT system of the identified active constraints exactly.
QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

/// Residuals of a candidate primal-dual point, written into `result`.
void qp_residuals(const QpProblem& problem, QpResult& result);

}  // namespace gridflow
