#include "gridflow/opf.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "gridflow/error.hpp"
#include "gridflow/qp_solver.hpp"

namespace gridflow {

std::vector<int> DcOpfInstance::flexible_nodes() const
{
    std::vector<int> out;
    for (int i = 0; i < n_buses(); ++i) {
        if (flexible(i)) out.push_back(i);
    }
    return out;
}

std::string to_string(OpfStatus status)
{
    switch (status) {
    case OpfStatus::Optimal: return "optimal";
    case OpfStatus::Infeasible: return "infeasible";
    case OpfStatus::MaxIterations: return "max_iter";
    }
    return "unknown";
}

NodalData make_nodal_data(const GridCase& c, std::shared_ptr<const GridLinAlg> grid, const Perturbation* pert,
                          const CostPolicy& policy)
{
    const int n = c.n_buses();
    NodalData d;
    DcOpfInstance& inst = d.instance;
    inst.a = Eigen::VectorXd::Zero(n);
    inst.b = Eigen::VectorXd::Zero(n);
    inst.p_min.resize(n);
    inst.p_max.resize(n);
    d.q_min.resize(n);
    d.q_max.resize(n);

    Eigen::VectorXd pd(n);
    for (int i = 0; i < n; ++i) {
        const double scale = pert ? pert->load_scale(i) : 1.0;
        pd(i) = c.buses[i].pd * scale;
        inst.p_min(i) = inst.p_max(i) = -pd(i);
        d.q_min(i) = d.q_max(i) = -c.buses[i].qd * scale;
    }

    // Flexible units per node combine at equal marginal cost:
    // a = 1 / sum(1/a_k), b = a * sum(b_k / a_k).
    Eigen::VectorXd inv_a = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd b_over_a = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd fixed_gen = Eigen::VectorXd::Zero(n);
    for (const auto& g : c.gens) {
        if (!g.in_service) continue;
        const int i = c.bus_index(g.bus);
        inst.p_min(i) += g.pmin;
        inst.p_max(i) += g.pmax;
        d.q_min(i) += g.qmin;
        d.q_max(i) += g.qmax;
        if (g.pmax <= g.pmin) {
            fixed_gen(i) += g.pmin;
            continue;
        }
        double a = g.cost_a;
        double b = g.cost_b;
        if (a <= 0.0) a = policy.quadratic_fill * std::max(b, 1.0) / std::max(g.pmax, 1e-3);
        if (pert) {
            a *= pert->cost_a_scale(i);
            b *= pert->cost_b_scale(i);
        }
        inv_a(i) += 1.0 / a;
        b_over_a(i) += b / a;
    }
    for (int i = 0; i < n; ++i) {
        if (inv_a(i) <= 0.0 || !inst.flexible(i)) continue;
        const double a = 1.0 / inv_a(i);
        const double b = a * b_over_a(i);
        // Cost of the flexible dispatch g = p + pd - fixed, rewritten in p.
        inst.a(i) = a;
        inst.b(i) = b + 2.0 * a * (pd(i) - fixed_gen(i));
    }
    inst.f_max = grid->limits();
    inst.grid = std::move(grid);
    return d;
}

DcOpfInstance make_instance(const GridCase& c, std::shared_ptr<const GridLinAlg> grid, const CostPolicy& policy)
{
    return make_nodal_data(c, std::move(grid), nullptr, policy).instance;
}

void validate_instance(const DcOpfInstance& inst)
{
    if (!inst.grid) throw Error(ErrorCode::DimensionMismatch, "instance has no grid");
    const int n = inst.grid->n_buses;
    if (inst.a.size() != n || inst.b.size() != n || inst.p_min.size() != n || inst.p_max.size() != n ||
        inst.f_max.size() != inst.grid->n_lines()) {
        throw Error(ErrorCode::DimensionMismatch, "instance vectors do not match the grid");
    }
    for (int i = 0; i < n; ++i) {
        if (inst.p_min(i) > inst.p_max(i)) {
            throw Error(ErrorCode::Infeasible, "p_min > p_max at node " + std::to_string(i));
        }
        if (inst.flexible(i) && !(inst.a(i) > 0.0)) {
            throw Error(ErrorCode::DimensionMismatch, "flexible node " + std::to_string(i) + " needs a > 0");
        }
    }
    const double tol = 1e-9 * (1.0 + inst.p_max.cwiseAbs().sum());
    if (inst.p_min.sum() > tol || inst.p_max.sum() < -tol) {
        throw Error(ErrorCode::Infeasible, "power balance cannot be met within the injection bounds");
    }
}

namespace {

struct Reduced {
    std::vector<int> flex;
    Eigen::VectorXd p_fixed;  // full-length, zero on flexible nodes
    Eigen::MatrixXd s_flex;   // L x nF
    Eigen::VectorXd f_fixed;  // flows from fixed injections
};

Reduced reduce(const DcOpfInstance& inst)
{
    Reduced r;
    r.flex = inst.flexible_nodes();
    const int n = inst.n_buses();
    r.p_fixed = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (!inst.flexible(i)) r.p_fixed(i) = inst.p_min(i);
    }
    const auto& isf = inst.grid->isf;
    r.s_flex.resize(isf.rows(), static_cast<Eigen::Index>(r.flex.size()));
    for (std::size_t k = 0; k < r.flex.size(); ++k) r.s_flex.col(static_cast<Eigen::Index>(k)) = isf.col(r.flex[k]);
    r.f_fixed = isf * r.p_fixed;
    return r;
}

// Elastic feasibility problem: minimize the largest flow-limit excess t.
bool flows_certified_infeasible(const DcOpfInstance& inst, const Reduced& r)
{
    const Eigen::Index nf = static_cast<Eigen::Index>(r.flex.size());
    const Eigen::Index nl = r.s_flex.rows();
    QpProblem qp;
    qp.q = Eigen::VectorXd::Constant(nf + 1, 1e-8);
    qp.c = Eigen::VectorXd::Zero(nf + 1);
    qp.c(nf) = 1.0;
    qp.E = Eigen::MatrixXd::Zero(1, nf + 1);
    qp.E.leftCols(nf).setOnes();
    qp.e = Eigen::VectorXd::Constant(1, -r.p_fixed.sum());
    qp.G = Eigen::MatrixXd::Zero(2 * nl + 2 * nf + 1, nf + 1);
    qp.h.resize(qp.G.rows());
    qp.G.block(0, 0, nl, nf) = r.s_flex;
    qp.G.block(0, nf, nl, 1).setConstant(-1.0);
    qp.h.head(nl) = inst.f_max - r.f_fixed;
    qp.G.block(nl, 0, nl, nf) = -r.s_flex;
    qp.G.block(nl, nf, nl, 1).setConstant(-1.0);
    qp.h.segment(nl, nl) = inst.f_max + r.f_fixed;
    for (Eigen::Index k = 0; k < nf; ++k) {
        qp.G(2 * nl + k, k) = 1.0;
        qp.h(2 * nl + k) = inst.p_max(r.flex[k]);
        qp.G(2 * nl + nf + k, k) = -1.0;
        qp.h(2 * nl + nf + k) = -inst.p_min(r.flex[k]);
    }
    qp.G(2 * nl + 2 * nf, nf) = -1.0;
    qp.h(2 * nl + 2 * nf) = 0.0;
    QpOptions opt;
    opt.tolerance = 1e-9;
    opt.polish = false;
    const QpResult res = solve_qp(qp, opt);
    return res.status == QpStatus::Optimal && res.x(nf) > 1e-6 * (1.0 + inst.f_max.cwiseAbs().maxCoeff());
}

}  // namespace

DcOpfSolution solve_dcopf(const DcOpfInstance& inst)
{
    DcOpfSolution sol;
    const int n = inst.n_buses();
    const int nl = inst.grid ? inst.grid->n_lines() : 0;
    sol.mu_bar = Eigen::VectorXd::Zero(nl);
    sol.mu_under = Eigen::VectorXd::Zero(nl);
    try {
        validate_instance(inst);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Infeasible) throw;
        sol.status = OpfStatus::Infeasible;
        return sol;
    }

    const Reduced r = reduce(inst);
    const Eigen::Index nf = static_cast<Eigen::Index>(r.flex.size());
    sol.p_star = r.p_fixed;

    if (nf == 0) {
        sol.f_star = r.f_fixed;
        const bool ok = std::abs(r.p_fixed.sum()) <= 1e-9 &&
                        ((r.f_fixed.cwiseAbs() - inst.f_max).array() <= 1e-6).all();
        sol.status = ok ? OpfStatus::Optimal : OpfStatus::Infeasible;
        sol.pi_star = Eigen::VectorXd::Zero(n);
        return sol;
    }

    QpProblem qp;
    qp.q.resize(nf);
    qp.c.resize(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
        qp.q(k) = 2.0 * inst.a(r.flex[k]);
        qp.c(k) = inst.b(r.flex[k]);
    }
    qp.E = Eigen::MatrixXd::Ones(1, nf);
    qp.e = Eigen::VectorXd::Constant(1, -r.p_fixed.sum());
    qp.G = Eigen::MatrixXd::Zero(2 * nl + 2 * nf, nf);
    qp.h.resize(qp.G.rows());
    qp.G.topRows(nl) = r.s_flex;
    qp.h.head(nl) = inst.f_max - r.f_fixed;
    qp.G.middleRows(nl, nl) = -r.s_flex;
    qp.h.segment(nl, nl) = inst.f_max + r.f_fixed;
    for (Eigen::Index k = 0; k < nf; ++k) {
        qp.G(2 * nl + k, k) = 1.0;
        qp.h(2 * nl + k) = inst.p_max(r.flex[k]);
        qp.G(2 * nl + nf + k, k) = -1.0;
        qp.h(2 * nl + nf + k) = -inst.p_min(r.flex[k]);
    }

    const QpResult res = solve_qp(qp);
    sol.iterations = res.iterations;
    for (Eigen::Index k = 0; k < nf; ++k) sol.p_star(r.flex[k]) = res.x(k);
    sol.f_star = inst.grid->isf * sol.p_star;
    sol.lambda = -res.y(0);
    sol.mu_bar = res.z.head(nl);
    sol.mu_under = res.z.segment(nl, nl);
    sol.pi_star = lmp_from_duals(sol, *inst.grid);
    sol.objective = (inst.a.array() * sol.p_star.array().square() + inst.b.array() * sol.p_star.array()).sum();
    sol.kkt_residual = std::max({res.stationarity, res.primal_residual, res.complementarity});

    if (res.status == QpStatus::Optimal && sol.kkt_residual < 1e-6) {
        sol.status = OpfStatus::Optimal;
    } else {
        sol.status = flows_certified_infeasible(inst, r) ? OpfStatus::Infeasible : OpfStatus::MaxIterations;
    }
    return sol;
}

DcOpfSolution solve_dcopf_or_throw(const DcOpfInstance& inst)
{
    DcOpfSolution sol = solve_dcopf(inst);
    if (sol.status == OpfStatus::Infeasible) throw Error(ErrorCode::Infeasible, "dc-OPF instance is infeasible");
    if (sol.status == OpfStatus::MaxIterations) {
        throw Error(ErrorCode::MaxIterations,
                    "dc-OPF did not converge (KKT residual " + format_double(sol.kkt_residual) + ")");
    }
    return sol;
}

Eigen::VectorXd lmp_from_duals(const DcOpfSolution& sol, const GridLinAlg& grid)
{
    return Eigen::VectorXd::Constant(grid.n_buses, sol.lambda) - grid.isf.transpose() * (sol.mu_bar - sol.mu_under);
}

double kkt_stationarity(const DcOpfInstance& inst, const DcOpfSolution& sol)
{
    double worst = 0.0;
    for (int i = 0; i < inst.n_buses(); ++i) {
        if (!inst.flexible(i)) continue;
        const double g = 2.0 * inst.a(i) * sol.p_star(i) + inst.b(i) - sol.pi_star(i);
        const double p = sol.p_star(i);
        const bool at_upper = inst.p_max(i) - p <= 1e-7 * (1.0 + std::abs(inst.p_max(i)));
        const bool at_lower = p - inst.p_min(i) <= 1e-7 * (1.0 + std::abs(inst.p_min(i)));
        double res = std::abs(g);
        if (at_upper) res = std::min(res, std::max(0.0, g));
        if (at_lower) res = std::min(res, std::max(0.0, -g));
        worst = std::max(worst, res);
    }
    return worst;
}

std::vector<char> binding_lines(const Eigen::VectorXd& flows, const Eigen::VectorXd& f_max)
{
    std::vector<char> out(flows.size(), 0);
    for (Eigen::Index k = 0; k < flows.size(); ++k) out[k] = std::abs(flows(k)) >= f_max(k) - kBindingTolerance;
    return out;
}

FlowViolation dc_flow_violation(const Eigen::VectorXd& p, const GridLinAlg& grid, const Eigen::VectorXd& f_max)
{
    if (p.size() != grid.n_buses || f_max.size() != grid.n_lines()) {
        throw Error(ErrorCode::DimensionMismatch, "injection or limit vector does not match the grid");
    }
    FlowViolation v;
    v.per_line = ((grid.isf * p).cwiseAbs() - f_max).cwiseMax(0.0);
    v.total = v.per_line.sum();
    return v;
}

ApparentFlow ac_apparent_flow(const Eigen::VectorXd& vm, const Eigen::VectorXd& theta, const GridLinAlg& grid)
{
    if (vm.size() != grid.n_buses || theta.size() != grid.n_buses) {
        throw Error(ErrorCode::DimensionMismatch, "voltage vectors do not match the grid");
    }
    ApparentFlow out;
    out.from_to.resize(grid.n_lines());
    out.to_from.resize(grid.n_lines());
    for (int k = 0; k < grid.n_lines(); ++k) {
        const int i = grid.lines[k].from;
        const int j = grid.lines[k].to;
        const double drop = std::abs(std::polar(vm(i), theta(i)) - std::polar(vm(j), theta(j)));
        out.from_to(k) = drop * vm(i) * grid.lines[k].admittance;
        out.to_from(k) = drop * vm(j) * grid.lines[k].admittance;
    }
    return out;
}

}  // namespace gridflow
