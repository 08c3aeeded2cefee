#include "gridflow/latent_chain.hpp"

#include <algorithm>
#include <cmath>

#include "gridflow/error.hpp"

namespace gridflow {

namespace {

void check_inputs(const ChainInputs& in, Eigen::Index rows, Eigen::Index cols)
{
    for (const auto* m : {&in.a, &in.b, &in.p_min, &in.p_max}) {
        if (m->rows() != rows || m->cols() != cols) {
            throw Error(ErrorCode::DimensionMismatch, "chain inputs do not match the price batch");
        }
    }
}

// 1 / (2a) on flexible nodes, 0 on fixed ones.
Eigen::MatrixXd half_inverse_a(const ChainInputs& in)
{
    Eigen::MatrixXd out(in.a.rows(), in.a.cols());
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        out(k) = in.p_max(k) > in.p_min(k) ? 0.5 / in.a(k) : 0.0;
    }
    return out;
}

}  // namespace

Eigen::MatrixXd ChainInputs::flexible() const
{
    return (p_max.array() > p_min.array()).cast<double>().matrix();
}

Eigen::MatrixXd hard_projection(const Eigen::MatrixXd& pi, const ChainInputs& in)
{
    check_inputs(in, pi.rows(), pi.cols());
    Eigen::MatrixXd p(pi.rows(), pi.cols());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (in.p_max(k) > in.p_min(k)) {
            const double r = (pi(k) - in.b(k)) / (2.0 * in.a(k));
            p(k) = std::clamp(r, in.p_min(k), in.p_max(k));
        } else {
            p(k) = in.p_min(k);
        }
    }
    return p;
}

double soft_clamp(double r, double lo, double hi, double k)
{
    auto sig = [k](double z) {
        const double t = k * z;
        return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    };
    const double r1 = sig(lo - r) * (lo - r) + r;
    return sig(hi - r1) * (r1 - hi) + hi;
}

ad::Var soft_projection(const ad::Var& pi, const ChainInputs& in, double sharpness)
{
    check_inputs(in, pi.rows(), pi.cols());
    ad::Tape& t = *pi.tape();
    const ad::Var r = ad::mul(ad::sub(pi, t.constant(in.b)), t.constant(half_inverse_a(in)));
    const ad::Var lo = t.constant(in.p_min);
    const ad::Var hi = t.constant(in.p_max);
    const ad::Var d1 = ad::sub(lo, r);
    const ad::Var r1 = ad::add(ad::mul(ad::sigmoid(d1, sharpness), d1), r);
    const ad::Var d2 = ad::sub(hi, r1);
    const ad::Var p = ad::sub(hi, ad::mul(ad::sigmoid(d2, sharpness), d2));
    // Fixed nodes sit exactly at their injection.
    const Eigen::MatrixXd flex = in.flexible();
    const Eigen::MatrixXd fixed = in.p_min.cwiseProduct((1.0 - flex.array()).matrix());
    return ad::add(ad::mul(p, t.constant(flex)), t.constant(fixed));
}

namespace {

ad::Var hard_projection_var(const ad::Var& pi, const ChainInputs& in)
{
    ad::Tape& t = *pi.tape();
    // Pass-through derivative 1/(2a) on unclamped flexible entries, 0 elsewhere.
    const Eigen::MatrixXd p = hard_projection(pi.value(), in);
    const Eigen::MatrixXd inv = half_inverse_a(in);
    Eigen::MatrixXd slope(p.rows(), p.cols());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const bool inside = in.p_max(k) > in.p_min(k) && p(k) > in.p_min(k) && p(k) < in.p_max(k);
        slope(k) = inside ? inv(k) : 0.0;
    }
    // p = slope * pi + (p - slope * pi) keeps the value exact and the gradient piecewise.
    const Eigen::MatrixXd offset = p - slope.cwiseProduct(pi.value());
    return ad::add(ad::mul(pi, t.constant(slope)), t.constant(offset));
}

}  // namespace

ad::Var dc_flows(const ad::Var& p, const GridLinAlg& grid)
{
    if (p.cols() != grid.n_buses) throw Error(ErrorCode::DimensionMismatch, "injection width does not match grid");
    return ad::matmul(p, p.tape()->constant(grid.isf.transpose()));
}

ad::Var dc_angles(const ad::Var& p, const GridLinAlg& grid)
{
    if (p.cols() != grid.n_buses) throw Error(ErrorCode::DimensionMismatch, "injection width does not match grid");
    const int n = grid.n_buses;
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int ri = grid.reduced_index(i);
        if (ri < 0) continue;
        for (int j = 0; j < n; ++j) {
            const int rj = grid.reduced_index(j);
            if (rj >= 0) full(i, j) = grid.b_inv(ri, rj);
        }
    }
    return ad::matmul(p, p.tape()->constant(full.transpose()));
}

AcLineFlows ac_flows(const ad::Var& vm, const ad::Var& theta, const GridLinAlg& grid)
{
    if (vm.cols() != grid.n_buses || theta.cols() != grid.n_buses || vm.rows() != theta.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "voltage batches do not match the grid");
    }
    std::vector<int> from;
    std::vector<int> to;
    Eigen::RowVectorXd y(grid.n_lines());
    for (int k = 0; k < grid.n_lines(); ++k) {
        from.push_back(grid.lines[k].from);
        to.push_back(grid.lines[k].to);
        y(k) = grid.lines[k].admittance;
    }
    ad::Tape& t = *vm.tape();
    const ad::Var vi = ad::gather_cols(vm, from);
    const ad::Var vj = ad::gather_cols(vm, to);
    const ad::Var dth = ad::sub(ad::gather_cols(theta, from), ad::gather_cols(theta, to));
    // |v_i e^{j a} - v_j e^{j b}|^2 = v_i^2 + v_j^2 - 2 v_i v_j cos(a - b)
    const ad::Var drop2 =
        ad::sub(ad::add(ad::square(vi), ad::square(vj)), ad::scale(ad::mul(ad::mul(vi, vj), ad::cos(dth)), 2.0));
    const ad::Var drop = ad::sqrt_safe(drop2);
    const ad::Var ymat = t.constant(y.replicate(vm.rows(), 1));
    const ad::Var scaled = ad::mul(drop, ymat);
    return {ad::mul(scaled, vi), ad::mul(scaled, vj)};
}

DcChain latent_chain_dc(const ad::Var& pi, const ChainInputs& in, const GridLinAlg& grid, bool soft, double sharpness)
{
    DcChain c;
    c.p = soft ? soft_projection(pi, in, sharpness) : hard_projection_var(pi, in);
    c.flows = dc_flows(c.p, grid);
    return c;
}

AcChain latent_chain_ac(const ad::Var& pi, const ad::Var& vm, const ChainInputs& in, const GridLinAlg& grid,
                        bool soft, double sharpness)
{
    AcChain c;
    c.p = soft ? soft_projection(pi, in, sharpness) : hard_projection_var(pi, in);
    c.theta = dc_angles(c.p, grid);
    c.s = ac_flows(vm, c.theta, grid);
    return c;
}

}  // namespace gridflow
