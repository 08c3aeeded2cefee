#include "gridflow/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace gridflow {

namespace {

double inf_norm(const Eigen::VectorXd& v)
{
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv)
{
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    }
    return alpha;
}

struct Direction {
    Eigen::VectorXd dx, dy, dz, ds;
};

// Try to reproduce the interior-point solution exactly by solving the KKT
// system restricted to the constraints the iterate identified as active.
bool polish(const QpProblem& p, QpResult& r, const Eigen::VectorXd& slack)
{
    const Eigen::Index n = p.q.size();
    const Eigen::Index me = p.E.rows();
    const Eigen::Index mi = p.G.rows();
    std::vector<char> active(mi, 0);
    for (Eigen::Index i = 0; i < mi; ++i) active[i] = r.z(i) > slack(i) ? 1 : 0;

    for (int round = 0; round < 12; ++round) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < mi; ++i) {
            if (active[i]) rows.push_back(i);
        }
        const Eigen::Index na = static_cast<Eigen::Index>(rows.size());
        const Eigen::Index dim = n + me + na;
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd rhs(dim);
        kkt.topLeftCorner(n, n) = p.q.asDiagonal();
        rhs.head(n) = -p.c;
        if (me > 0) {
            kkt.block(0, n, n, me) = p.E.transpose();
            kkt.block(n, 0, me, n) = p.E;
            rhs.segment(n, me) = p.e;
        }
        for (Eigen::Index k = 0; k < na; ++k) {
            kkt.block(0, n + me + k, n, 1) = p.G.row(rows[k]).transpose();
            kkt.block(n + me + k, 0, 1, n) = p.G.row(rows[k]);
            rhs(n + me + k) = p.h(rows[k]);
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
        const Eigen::VectorXd sol = cod.solve(rhs);
        if (!sol.allFinite()) return false;

        QpResult cand = r;
        cand.x = sol.head(n);
        cand.y = sol.segment(n, me);
        cand.z = Eigen::VectorXd::Zero(mi);
        for (Eigen::Index k = 0; k < na; ++k) cand.z(rows[k]) = sol(n + me + k);

        const double scale = 1.0 + inf_norm(p.c) + inf_norm(p.h);
        bool changed = false;
        Eigen::Index worst_dual = -1;
        for (Eigen::Index k = 0; k < na; ++k) {
            if (cand.z(rows[k]) < -1e-12 * scale && (worst_dual < 0 || cand.z(rows[k]) < cand.z(worst_dual))) {
                worst_dual = rows[k];
            }
        }
        if (worst_dual >= 0) {
            active[worst_dual] = 0;
            changed = true;
        } else {
            const Eigen::VectorXd viol = p.G * cand.x - p.h;
            Eigen::Index worst_primal = -1;
            for (Eigen::Index i = 0; i < mi; ++i) {
                if (!active[i] && viol(i) > 1e-12 * scale && (worst_primal < 0 || viol(i) > viol(worst_primal))) {
                    worst_primal = i;
                }
            }
            if (worst_primal >= 0) {
                active[worst_primal] = 1;
                changed = true;
            }
        }
        if (changed) continue;

        cand.z = cand.z.cwiseMax(0.0);
        qp_residuals(p, cand);
        const double before = std::max({r.stationarity, r.primal_residual, r.complementarity});
        const double after = std::max({cand.stationarity, cand.primal_residual, cand.complementarity});
        if (after > before) return false;
        cand.polished = true;
        r = std::move(cand);
        return true;
    }
    return false;
}

}  // namespace

void qp_residuals(const QpProblem& p, QpResult& r)
{
    Eigen::VectorXd rd = p.q.cwiseProduct(r.x) + p.c;
    if (p.E.rows() > 0) rd += p.E.transpose() * r.y;
    if (p.G.rows() > 0) rd += p.G.transpose() * r.z;
    r.stationarity = inf_norm(rd);
    double primal = p.E.rows() > 0 ? inf_norm(p.E * r.x - p.e) : 0.0;
    double comp = 0.0;
    if (p.G.rows() > 0) {
        const Eigen::VectorXd slack = p.h - p.G * r.x;
        primal = std::max(primal, std::max(0.0, -slack.minCoeff()));
        comp = inf_norm(r.z.cwiseProduct(slack));
        comp = std::max(comp, std::max(0.0, -r.z.minCoeff()));
    }
    r.primal_residual = primal;
    r.complementarity = comp;
}

QpResult solve_qp(const QpProblem& problem, const QpOptions& options)
{
    // Work on a cost-normalized copy so the tolerances are scale free.
    const double scale = std::max({1.0, inf_norm(problem.q), inf_norm(problem.c)});
    QpProblem p = problem;
    p.q /= scale;
    p.c /= scale;

    const Eigen::Index n = p.q.size();
    const Eigen::Index me = p.E.rows();
    const Eigen::Index mi = p.G.rows();

    QpResult r;
    r.x = Eigen::VectorXd::Zero(n);
    r.y = Eigen::VectorXd::Zero(me);
    r.z = Eigen::VectorXd::Ones(mi);
    Eigen::VectorXd s = Eigen::VectorXd::Ones(mi);

    const double tol = options.tolerance;
    const double c_scale = 1.0 + inf_norm(p.c);
    const double h_scale = 1.0 + std::max(inf_norm(p.h), inf_norm(p.e));

    // Starting point: the Newton system with unit slacks and duals.
    {
        Eigen::MatrixXd h = p.q.asDiagonal();
        h += p.G.transpose() * p.G;
        h.diagonal().array() += 1e-8;
        Eigen::LLT<Eigen::MatrixXd> llt(h);
        const Eigen::VectorXd rhs = -p.c + p.G.transpose() * p.h;
        Eigen::VectorXd x = llt.solve(rhs);
        if (me > 0) {
            const Eigen::MatrixXd hinv_et = llt.solve(p.E.transpose());
            const Eigen::VectorXd y = (p.E * hinv_et).ldlt().solve(p.E * x - p.e);
            x -= hinv_et * y;
        }
        r.x = x;
        s = p.h - p.G * r.x;
        for (Eigen::Index i = 0; i < mi; ++i) s(i) = std::max(s(i), 1.0);
    }

    auto solve_direction = [&](const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::MatrixXd& hinv_et,
                               const Eigen::LDLT<Eigen::MatrixXd>& schur, const Eigen::VectorXd& rd,
                               const Eigen::VectorXd& re, const Eigen::VectorXd& ri, const Eigen::VectorXd& rsz) {
        Direction d;
        const Eigen::VectorXd t = (r.z.cwiseProduct(ri) - rsz).cwiseQuotient(s);
        const Eigen::VectorXd rhs = -rd - p.G.transpose() * t;
        Eigen::VectorXd dx = llt.solve(rhs);
        if (me > 0) {
            d.dy = schur.solve(p.E * dx + re);
            dx -= hinv_et * d.dy;
        } else {
            d.dy = Eigen::VectorXd::Zero(0);
        }
        const Eigen::VectorXd gdx = p.G * dx;
        d.dz = r.z.cwiseQuotient(s).cwiseProduct(gdx) + t;
        d.ds = -ri - gdx;
        d.dx = std::move(dx);
        return d;
    };

    // Keep the best iterate: once the Newton systems become ill-conditioned
    // the residuals stagnate or grow, and the polish step takes over.
    QpResult best = r;
    Eigen::VectorXd best_s = s;
    double best_merit = std::numeric_limits<double>::infinity();
    int best_it = 0;
    for (int it = 0; it < options.max_iterations; ++it) {
        r.iterations = it;
        Eigen::VectorXd rd = p.q.cwiseProduct(r.x) + p.c;
        if (me > 0) rd += p.E.transpose() * r.y;
        if (mi > 0) rd += p.G.transpose() * r.z;
        const Eigen::VectorXd re = me > 0 ? Eigen::VectorXd(p.E * r.x - p.e) : Eigen::VectorXd(0);
        const Eigen::VectorXd ri = p.G * r.x + s - p.h;
        const double mu = mi > 0 ? s.dot(r.z) / static_cast<double>(mi) : 0.0;

        const double merit =
            std::max({inf_norm(rd) / c_scale, inf_norm(re) / h_scale, inf_norm(ri) / h_scale, mu});
        if (merit < best_merit) {
            best_merit = merit;
            best = r;
            best_s = s;
            best_it = it;
        }
        if (merit <= tol || it - best_it > 6) break;

        Eigen::MatrixXd h = p.q.asDiagonal();
        h += p.G.transpose() * r.z.cwiseQuotient(s).asDiagonal() * p.G;
        h.diagonal().array() += 1e-14 * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
        Eigen::LLT<Eigen::MatrixXd> llt(h);
        if (llt.info() != Eigen::Success) break;
        Eigen::MatrixXd hinv_et;
        Eigen::LDLT<Eigen::MatrixXd> schur;
        if (me > 0) {
            hinv_et = llt.solve(p.E.transpose());
            schur.compute(p.E * hinv_et);
        }

        // Predictor.
        const Eigen::VectorXd sz = s.cwiseProduct(r.z);
        Direction aff = solve_direction(llt, hinv_et, schur, rd, re, ri, sz);
        const double a_aff = std::min(max_step(s, aff.ds), max_step(r.z, aff.dz));
        const double mu_aff =
            mi > 0 ? (s + a_aff * aff.ds).dot(r.z + a_aff * aff.dz) / static_cast<double>(mi) : 0.0;
        const double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;

        // Corrector.
        Eigen::VectorXd rsz = sz + aff.ds.cwiseProduct(aff.dz);
        rsz.array() -= sigma * mu;
        Direction d = solve_direction(llt, hinv_et, schur, rd, re, ri, rsz);
        const double alpha = std::min(1.0, 0.995 * std::min(max_step(s, d.ds), max_step(r.z, d.dz)));
        r.x += alpha * d.dx;
        if (me > 0) r.y += alpha * d.dy;
        r.z += alpha * d.dz;
        s += alpha * d.ds;
        if (!r.x.allFinite() || !r.z.allFinite()) break;
    }

    const int iterations = r.iterations;
    r = std::move(best);
    r.iterations = iterations;
    qp_residuals(p, r);
    if (best_merit <= tol) r.status = QpStatus::Optimal;
    // A stalled but nearly converged iterate is accepted when the polish
    // recovers an exact KKT point from its active set.
    if (options.polish && best_merit <= 1e-5 && polish(p, r, best_s)) r.status = QpStatus::Optimal;

    r.y *= scale;
    r.z *= scale;
    qp_residuals(problem, r);
    return r;
}

}  // namespace gridflow
