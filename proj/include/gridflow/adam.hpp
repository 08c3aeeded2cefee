#pragma once

#include <vector>

#include "gridflow/autodiff.hpp"

namespace gridflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void validate(const AdamConfig& config);

/// Adam with bias correction. Parameters with a support pattern are re-masked
/// after every step.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(std::vector<ad::Parameter>& params);
    long steps() const { return t_; }
    const std::vector<Eigen::MatrixXd>& first_moment() const { return m_; }
    const std::vector<Eigen::MatrixXd>& second_moment() const { return v_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    long t_ = 0;
    std::vector<Eigen::MatrixXd> m_;
    std::vector<Eigen::MatrixXd> v_;
};

}  // namespace gridflow
