#include "gridflow/models.hpp"

#include <cmath>

#include "gridflow/error.hpp"
#include "gridflow/random.hpp"

namespace gridflow {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;  // "init"

Eigen::MatrixXd uniform_matrix(std::uint64_t seed, std::uint64_t index, Eigen::Index rows, Eigen::Index cols,
                               double bound)
{
    auto rng = keyed_rng(seed, kInitStream, index);
    Eigen::MatrixXd m(rows, cols);
    // Column-major fill order is part of the determinism contract.
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = uniform(rng, -bound, bound);
    return m;
}

std::string layer_name(const char* prefix, int t)
{
    return std::string(prefix) + std::to_string(t);
}

}  // namespace

std::string to_string(ModelKind kind)
{
    return kind == ModelKind::Gnn ? "gnn" : "fcnn";
}

ModelKind parse_model_kind(const std::string& text)
{
    if (text == "gnn") return ModelKind::Gnn;
    if (text == "fcnn") return ModelKind::Fcnn;
    throw Error(ErrorCode::BadConfig, "model kind must be gnn or fcnn, got '" + text + "'");
}

void validate(const ModelSpec& spec)
{
    if (spec.n_buses <= 0) throw Error(ErrorCode::BadConfig, "model needs at least one bus");
    if (spec.widths.size() < 2) throw Error(ErrorCode::BadConfig, "widths need an input and at least one layer");
    for (int w : spec.widths) {
        if (w <= 0) throw Error(ErrorCode::BadConfig, "layer widths must be positive");
    }
    if (spec.outputs.empty() && spec.n_logits <= 0) throw Error(ErrorCode::BadConfig, "model has no outputs");
    if (spec.n_logits < 0) throw Error(ErrorCode::BadConfig, "n_logits must be non-negative");
}

long layer_parameter_count(const ModelSpec& spec, int mask_nnz, int t)
{
    const long n = spec.n_buses;
    const long din = spec.widths.at(t);
    const long dout = spec.widths.at(t + 1);
    if (spec.kind == ModelKind::Gnn) return mask_nnz + din * dout + dout;
    return (n * din) * (n * dout) + n * dout;
}

long head_parameter_count(const ModelSpec& spec)
{
    const long n = spec.n_buses;
    const long dt = spec.widths.back();
    const long per_channel = spec.kind == ModelKind::Gnn ? n * dt + n : n * dt * n + n;
    long total = per_channel * static_cast<long>(spec.outputs.size());
    if (spec.n_logits > 0) total += n * dt * spec.n_logits + spec.n_logits;
    return total;
}

long total_parameter_count(const ModelSpec& spec, int mask_nnz)
{
    long total = head_parameter_count(spec);
    for (int t = 0; t < spec.n_layers(); ++t) total += layer_parameter_count(spec, mask_nnz, t);
    return total;
}

ad::Parameter& Model::parameter(const std::string& name)
{
    for (auto& p : params_) {
        if (p.name == name) return p;
    }
    throw Error(ErrorCode::ShapeMismatch, "model has no parameter " + name);
}

const ad::Parameter& Model::parameter(const std::string& name) const
{
    return const_cast<Model*>(this)->parameter(name);
}

bool Model::has_parameter(const std::string& name) const
{
    for (const auto& p : params_) {
        if (p.name == name) return true;
    }
    return false;
}

long Model::parameter_count() const
{
    long total = 0;
    for (const auto& p : params_) {
        total += p.support.size() > 0 ? static_cast<long>(p.support.sum()) : static_cast<long>(p.value.size());
    }
    return total;
}

long Model::dense_parameter_count() const
{
    long total = 0;
    for (const auto& p : params_) total += static_cast<long>(p.value.size());
    return total;
}

void Model::zero_grad()
{
    for (auto& p : params_) p.zero_grad();
}

ad::Parameter& Model::add_parameter(std::string name, Eigen::MatrixXd value)
{
    ad::Parameter p;
    p.name = std::move(name);
    p.value = std::move(value);
    params_.push_back(std::move(p));
    return params_.back();
}

void Model::check_input(const Eigen::MatrixXd& x) const
{
    if (x.cols() != static_cast<Eigen::Index>(spec_.n_buses) * spec_.widths.front() || x.rows() == 0) {
        throw Error(ErrorCode::ShapeMismatch, "input is " + std::to_string(x.rows()) + " x " +
                                                  std::to_string(x.cols()) + ", model expects B x " +
                                                  std::to_string(spec_.n_buses * spec_.widths.front()));
    }
}

GnnModel::GnnModel(ModelSpec spec, GraphMask mask, std::uint64_t seed, const Eigen::MatrixXd* filter_init)
    : Model(std::move(spec)), mask_(std::move(mask))
{
    validate(spec_);
    const int n = spec_.n_buses;
    if (mask_.size() != n) throw Error(ErrorCode::ShapeMismatch, "mask size does not match the model");
    if (filter_init != nullptr && (filter_init->rows() != n || filter_init->cols() != n)) {
        throw Error(ErrorCode::ShapeMismatch, "filter initialization is not N x N");
    }
    const Eigen::MatrixXd support = mask_.as_matrix();
    const Eigen::MatrixXd w0 =
        filter_init != nullptr ? filter_init->cwiseProduct(support) : Eigen::MatrixXd(Eigen::MatrixXd::Identity(n, n));
    std::uint64_t index = 0;
    for (int t = 0; t < spec_.n_layers(); ++t) {
        const int din = spec_.widths[t];
        const int dout = spec_.widths[t + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(din));
        ad::Parameter& w = add_parameter(layer_name("W", t), w0);
        w.support = support;
        add_parameter(layer_name("H", t), uniform_matrix(seed, index++, din, dout, bound));
        add_parameter(layer_name("b", t), uniform_matrix(seed, index++, 1, dout, bound));
    }
    const int dt = spec_.widths.back();
    const double bound = 1.0 / std::sqrt(static_cast<double>(dt));
    for (const auto& ch : spec_.outputs) {
        add_parameter("head_W_" + ch, uniform_matrix(seed, index++, n, dt, bound));
        add_parameter("head_b_" + ch, uniform_matrix(seed, index++, 1, n, bound));
    }
    if (spec_.n_logits > 0) {
        const double cb = 1.0 / std::sqrt(static_cast<double>(n * dt));
        add_parameter("cls_W", uniform_matrix(seed, index++, n * dt, spec_.n_logits, cb));
        add_parameter("cls_b", uniform_matrix(seed, index++, 1, spec_.n_logits, cb));
    }
}

void GnnModel::set_mask(const GraphMask& mask)
{
    if (mask.size() != spec_.n_buses) throw Error(ErrorCode::ShapeMismatch, "mask size does not match the model");
    mask_ = mask;
    const Eigen::MatrixXd support = mask_.as_matrix();
    for (int t = 0; t < spec_.n_layers(); ++t) {
        ad::Parameter& w = parameter(layer_name("W", t));
        w.support = support;
        w.apply_support();
    }
}

ModelOutputs GnnModel::forward(ad::Tape& tape, const Eigen::MatrixXd& x)
{
    check_input(x);
    const int n = spec_.n_buses;
    ad::Var h = ad::rows_to_blocks(tape.constant(x), n);
    std::size_t k = 0;
    for (int t = 0; t < spec_.n_layers(); ++t) {
        const ad::Var w = tape.parameter(params_[k++]);
        const ad::Var feat = tape.parameter(params_[k++]);
        const ad::Var bias = tape.parameter(params_[k++]);
        h = ad::relu(ad::add_row(ad::matmul(ad::graph_filter(h, w, mask_), feat), bias));
    }
    ModelOutputs out;
    for (const auto& ch : spec_.outputs) {
        const ad::Var hw = tape.parameter(params_[k++]);
        const ad::Var hb = tape.parameter(params_[k++]);
        out.channels[ch] = ad::node_head(h, hw, hb);
    }
    if (spec_.n_logits > 0) {
        const ad::Var cw = tape.parameter(params_[k++]);
        const ad::Var cb = tape.parameter(params_[k++]);
        out.logits = ad::add_row(ad::matmul(ad::blocks_to_rows(h, n), cw), cb);
    }
    return out;
}

std::unique_ptr<Model> GnnModel::clone() const
{
    return std::make_unique<GnnModel>(*this);
}

FcnnModel::FcnnModel(ModelSpec spec, std::uint64_t seed) : Model(std::move(spec))
{
    validate(spec_);
    const int n = spec_.n_buses;
    std::uint64_t index = 0;
    for (int t = 0; t < spec_.n_layers(); ++t) {
        const int fan_in = n * spec_.widths[t];
        const int fan_out = n * spec_.widths[t + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        add_parameter(layer_name("W", t), uniform_matrix(seed, index++, fan_in, fan_out, bound));
        add_parameter(layer_name("b", t), uniform_matrix(seed, index++, 1, fan_out, bound));
    }
    const int flat = n * spec_.widths.back();
    const double bound = 1.0 / std::sqrt(static_cast<double>(flat));
    for (const auto& ch : spec_.outputs) {
        add_parameter("head_W_" + ch, uniform_matrix(seed, index++, flat, n, bound));
        add_parameter("head_b_" + ch, uniform_matrix(seed, index++, 1, n, bound));
    }
    if (spec_.n_logits > 0) {
        add_parameter("cls_W", uniform_matrix(seed, index++, flat, spec_.n_logits, bound));
        add_parameter("cls_b", uniform_matrix(seed, index++, 1, spec_.n_logits, bound));
    }
}

ModelOutputs FcnnModel::forward(ad::Tape& tape, const Eigen::MatrixXd& x)
{
    check_input(x);
    ad::Var h = tape.constant(x);
    std::size_t k = 0;
    for (int t = 0; t < spec_.n_layers(); ++t) {
        const ad::Var w = tape.parameter(params_[k++]);
        const ad::Var b = tape.parameter(params_[k++]);
        h = ad::relu(ad::add_row(ad::matmul(h, w), b));
    }
    ModelOutputs out;
    for (const auto& ch : spec_.outputs) {
        const ad::Var hw = tape.parameter(params_[k++]);
        const ad::Var hb = tape.parameter(params_[k++]);
        out.channels[ch] = ad::add_row(ad::matmul(h, hw), hb);
    }
    if (spec_.n_logits > 0) {
        const ad::Var cw = tape.parameter(params_[k++]);
        const ad::Var cb = tape.parameter(params_[k++]);
        out.logits = ad::add_row(ad::matmul(h, cw), cb);
    }
    return out;
}

std::unique_ptr<Model> FcnnModel::clone() const
{
    return std::make_unique<FcnnModel>(*this);
}

Eigen::MatrixXd normalized_bbus(const GridLinAlg& grid)
{
    const int n = grid.n_buses;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    for (const auto& line : grid.lines) {
        const double y = 1.0 / line.reactance;
        b(line.from, line.from) += y;
        b(line.to, line.to) += y;
        b(line.from, line.to) -= y;
        b(line.to, line.from) -= y;
    }
    Eigen::VectorXd scale(n);
    for (int i = 0; i < n; ++i) scale(i) = b(i, i) > 0.0 ? 1.0 / std::sqrt(b(i, i)) : 1.0;
    return scale.asDiagonal() * b * scale.asDiagonal();
}

std::unique_ptr<Model> make_model(const ModelSpec& spec, const GridLinAlg& grid, std::uint64_t seed)
{
    if (spec.n_buses != grid.n_buses) throw Error(ErrorCode::ShapeMismatch, "model and grid bus counts differ");
    if (spec.kind == ModelKind::Fcnn) return std::make_unique<FcnnModel>(spec, seed);
    const Eigen::MatrixXd init = normalized_bbus(grid);
    return std::make_unique<GnnModel>(spec, grid.mask, seed, &init);
}

}  // namespace gridflow
