#include "gridflow/loss.hpp"

#include "gridflow/error.hpp"

namespace gridflow {

std::string to_string(FrMode mode)
{
    switch (mode) {
    case FrMode::None: return "none";
    case FrMode::Dc: return "dc";
    case FrMode::Ac: return "ac";
    }
    return "none";
}

FrMode parse_fr_mode(const std::string& text)
{
    if (text == "none") return FrMode::None;
    if (text == "dc") return FrMode::Dc;
    if (text == "ac") return FrMode::Ac;
    throw Error(ErrorCode::BadConfig, "fr_mode must be none, dc or ac, got '" + text + "'");
}

void validate(const LossConfig& c)
{
    for (double w : {c.gamma_pi, c.gamma_v, c.gamma_fr, c.gamma_p}) {
        if (!(w >= 0.0)) throw Error(ErrorCode::BadConfig, "loss weights must be non-negative");
    }
    if (!(c.linf_temperature > 0.0) || !(c.sharpness > 0.0) || !(c.hinge_sharpness > 0.0)) {
        throw Error(ErrorCode::BadConfig, "temperatures and sharpness must be positive");
    }
}

ad::Var fr_penalty(const ad::Var& values, const Eigen::VectorXd& limits, const std::vector<int>& active_lines,
                   bool two_sided, bool smooth, double sharpness)
{
    if (limits.size() != values.cols()) throw Error(ErrorCode::DimensionMismatch, "limit vector width");
    std::vector<int> cols = active_lines;
    if (cols.empty()) {
        for (int k = 0; k < limits.size(); ++k) cols.push_back(k);
    }
    Eigen::RowVectorXd neg_limit(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] < 0 || cols[k] >= limits.size()) throw Error(ErrorCode::DimensionMismatch, "active line index");
        neg_limit(static_cast<Eigen::Index>(k)) = -limits(cols[k]);
    }
    ad::Tape& t = *values.tape();
    const ad::Var v = ad::gather_cols(values, cols);
    const ad::Var lim = t.constant(neg_limit);
    auto excess = [&](const ad::Var& z) {
        return smooth ? ad::mul(ad::sigmoid(z, sharpness), z) : ad::hinge(z);
    };
    ad::Var total = excess(ad::add_row(v, lim));
    if (two_sided) total = ad::add(total, excess(ad::add_row(ad::scale(v, -1.0), lim)));
    return ad::scale(ad::sum(total), 1.0 / static_cast<double>(values.rows()));
}

namespace {

const ad::Var& prediction(const LossInputs& in, const std::string& channel)
{
    auto it = in.predictions.find(channel);
    if (it == in.predictions.end()) throw Error(ErrorCode::MissingChannel, "no prediction for channel " + channel);
    return it->second;
}

const Eigen::MatrixXd& target(const LossInputs& in, const std::string& channel)
{
    auto it = in.targets.find(channel);
    if (it == in.targets.end()) throw Error(ErrorCode::MissingChannel, "no label for channel " + channel);
    return it->second;
}

}  // namespace

LossTerms composite_loss(const LossInputs& in, const LossConfig& config)
{
    const ad::Var& pi = prediction(in, "pi");
    const Eigen::MatrixXd& pi_star = target(in, "pi");
    if (pi_star.rows() != pi.rows() || pi_star.cols() != pi.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "price labels do not match predictions");
    }
    ad::Tape& t = *pi.tape();
    const double inv_batch = 1.0 / static_cast<double>(pi.rows());

    LossTerms terms;
    const ad::Var err_pi = ad::sub(pi, t.constant(pi_star));
    ad::Var total = ad::scale(ad::sum(ad::square(err_pi)), config.gamma_pi * inv_batch);

    const bool want_v = config.fr_mode == FrMode::Ac || in.predictions.count("vm") > 0;
    if (want_v) {
        const ad::Var& vm = prediction(in, "vm");
        const ad::Var err_v = ad::sub(vm, t.constant(target(in, "vm")));
        total = ad::add(total, ad::scale(ad::sum(ad::square(err_v)), config.gamma_v * inv_batch));
    }
    terms.label = total.value()(0, 0);

    if (config.use_linf_pi) {
        const ad::Var lse = ad::logsumexp_rows(ad::square(err_pi), config.linf_temperature);
        const ad::Var linf = ad::scale(ad::sum(lse), config.gamma_pi * inv_batch);
        terms.linf = linf.value()(0, 0);
        total = ad::add(total, linf);
    }
    if (config.fr_mode != FrMode::None && config.gamma_fr > 0.0) {
        if (!in.fr.valid()) throw Error(ErrorCode::MissingChannel, "feasibility penalty requested but not provided");
        terms.fr = in.fr.value()(0, 0);
        total = ad::add(total, ad::scale(in.fr, config.gamma_fr));
    }
    if (config.gamma_p > 0.0) {
        if (!in.p_hat.valid() || in.p_target.size() == 0) {
            throw Error(ErrorCode::MissingChannel, "injection term requested but p labels are missing");
        }
        const ad::Var err_p = ad::sub(in.p_hat, t.constant(in.p_target));
        const ad::Var aux = ad::scale(ad::sum(ad::square(err_p)), config.gamma_p * inv_batch);
        terms.aux_p = aux.value()(0, 0);
        total = ad::add(total, aux);
    }
    terms.total = total;
    return terms;
}

}  // namespace gridflow
