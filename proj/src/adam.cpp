#include "gridflow/adam.hpp"

#include <cmath>

#include "gridflow/error.hpp"

namespace gridflow {

void validate(const AdamConfig& c)
{
    if (!(c.lr > 0.0) || !(c.eps > 0.0) || !(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
        throw Error(ErrorCode::BadConfig, "invalid Adam hyper-parameters");
    }
}

void Adam::step(std::vector<ad::Parameter>& params)
{
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
            v_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
        }
    }
    if (m_.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::Parameter& p = params[k];
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
            throw Error(ErrorCode::ShapeMismatch, "gradient shape of " + p.name);
        }
        m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * p.grad;
        v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
        p.value.array() -= config_.lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.eps);
        p.apply_support();
    }
}

}  // namespace gridflow
