#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/autodiff.hpp"
#include "gridflow/opf.hpp"

namespace testutil {

struct Oracle {
    double objective = std::numeric_limits<double>::infinity();
    Eigen::VectorXd p;
};

// Exhaustive search on a lattice over all but the last flexible node; the
// last one closes the balance.
inline Oracle brute_force(const gridflow::DcOpfInstance& inst, double step = 1e-3)
{
    const auto flex = inst.flexible_nodes();
    if (flex.empty() || flex.size() > 3) throw std::invalid_argument("brute force needs 1 to 3 flexible nodes");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(inst.n_buses());
    for (int i = 0; i < inst.n_buses(); ++i) {
        if (!inst.flexible(i)) p(i) = inst.p_min(i);
    }
    Oracle best;
    const int last = flex.back();
    auto evaluate = [&] {
        double rest = 0.0;
        for (int i = 0; i < inst.n_buses(); ++i) {
            if (i != last) rest += p(i);
        }
        p(last) = -rest;
        if (p(last) < inst.p_min(last) - 1e-12 || p(last) > inst.p_max(last) + 1e-12) return;
        const Eigen::VectorXd f = inst.grid->isf * p;
        if (((f.cwiseAbs() - inst.f_max).array() > 1e-12).any()) return;
        const double obj = (inst.a.array() * p.array().square() + inst.b.array() * p.array()).sum();
        if (obj < best.objective) {
            best.objective = obj;
            best.p = p;
        }
    };
    std::function<void(std::size_t)> sweep = [&](std::size_t depth) {
        if (depth + 1 == flex.size()) {
            evaluate();
            return;
        }
        const int i = flex[depth];
        const int steps = static_cast<int>(std::floor((inst.p_max(i) - inst.p_min(i)) / step + 1e-9));
        for (int k = 0; k <= steps; ++k) {
            p(i) = inst.p_min(i) + k * step;
            sweep(depth + 1);
        }
    };
    sweep(0);
    return best;
}

struct GradientCheck {
    int checked = 0;
    int failed = 0;
    /// Largest |fd - ad| / max(1e-4 * max(|fd|, |ad|), 1e-7); at most 1 passes.
    double worst = 0.0;
    std::string worst_entry;
};

// Central differences (step 1e-5) against the recorded gradient for every
// entry of every parameter.
inline GradientCheck check_gradients(std::vector<gridflow::ad::Parameter>& params,
                                     const std::function<gridflow::ad::Var(gridflow::ad::Tape&)>& loss)
{
    gridflow::ad::Tape tape;
    for (auto& p : params) p.zero_grad();
    tape.backward(loss(tape));
    std::vector<gridflow::ad::Matrix> grads;
    for (const auto& p : params) grads.push_back(p.grad);

    const double h = 1e-5;
    GradientCheck out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (Eigen::Index k = 0; k < params[i].value.size(); ++k) {
            const double saved = params[i].value(k);
            params[i].value(k) = saved + h;
            tape.clear();
            const double up = loss(tape).value()(0, 0);
            params[i].value(k) = saved - h;
            tape.clear();
            const double down = loss(tape).value()(0, 0);
            params[i].value(k) = saved;
            const double fd = (up - down) / (2 * h);
            const double an = grads[i](k);
            const double ratio =
                std::abs(fd - an) / std::max(1e-4 * std::max(std::abs(fd), std::abs(an)), 1e-7);
            if (!(ratio <= 1.0)) ++out.failed;
            if (!(ratio <= out.worst)) {
                out.worst = ratio;
                out.worst_entry = params[i].name + "[" + std::to_string(k) + "] fd=" + std::to_string(fd) +
                                  " ad=" + std::to_string(an);
            }
            ++out.checked;
        }
    }
    return out;
}

}  // namespace testutil
