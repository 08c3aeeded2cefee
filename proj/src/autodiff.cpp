#include "gridflow/autodiff.hpp"

#include <cmath>

#include "gridflow/error.hpp"

namespace gridflow::ad {

const Matrix& Var::value() const
{
    if (tape_ == nullptr) throw Error(ErrorCode::GraphNotRecorded, "empty variable handle");
    return tape_->value(*this);
}

void Tape::check(const Var& v) const
{
    if (v.tape_ != this || v.generation_ != generation_ || v.id_ < 0 ||
        v.id_ >= static_cast<int>(nodes_.size())) {
        throw Error(ErrorCode::GraphNotRecorded, "variable is not part of this recording");
    }
}

Var Tape::record(Matrix value, bool needs_grad, Backward backward)
{
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    if (needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    swept_ = false;
    return Var(this, static_cast<int>(nodes_.size()) - 1, generation_);
}

Var Tape::constant(Matrix value)
{
    return record(std::move(value), false, nullptr);
}

Var Tape::variable(Matrix value)
{
    return record(std::move(value), true, nullptr);
}

Var Tape::parameter(Parameter& p)
{
    Var v = record(p.value, true, nullptr);
    nodes_.back().param = &p;
    return v;
}

const Matrix& Tape::value(const Var& v) const
{
    check(v);
    return nodes_[v.id_].value;
}

const Matrix& Tape::grad(const Var& v) const
{
    check(v);
    if (!swept_) throw Error(ErrorCode::GraphNotRecorded, "backward() has not run on this recording");
    return nodes_[v.id_].grad;
}

void Tape::accumulate(const Var& v, const Matrix& g)
{
    Node& node = nodes_[v.id_];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0) {
        node.grad = g;
    } else {
        node.grad += g;
    }
}

void Tape::backward(const Var& loss)
{
    check(loss);
    if (nodes_[loss.id_].value.size() != 1) {
        throw Error(ErrorCode::DimensionMismatch, "backward() needs a scalar output");
    }
    for (auto& node : nodes_) node.grad.resize(0, 0);
    nodes_[loss.id_].grad = Matrix::Ones(1, 1);
    for (int i = loss.id_; i >= 0; --i) {
        Node& node = nodes_[i];
        if (!node.needs_grad || node.grad.size() == 0) continue;
        if (node.backward) {
            // The closure may add into earlier nodes only, so the reference stays valid.
            const Matrix g = node.grad;
            node.backward(*this, g);
        }
    }
    for (auto& node : nodes_) {
        if (node.needs_grad && node.grad.size() == 0) node.grad.setZero(node.value.rows(), node.value.cols());
        if (node.param != nullptr) {
            if (node.param->grad.size() == 0) {
                node.param->grad = node.grad;
            } else {
                node.param->grad += node.grad;
            }
        }
    }
    swept_ = true;
}

void Tape::clear()
{
    nodes_.clear();
    ++generation_;
    swept_ = false;
}

namespace {

Tape& tape_of(const Var& a)
{
    if (!a.valid()) throw Error(ErrorCode::GraphNotRecorded, "empty variable handle");
    a.tape()->check(a);
    return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b)
{
    Tape& t = tape_of(a);
    t.check(b);
    return t;
}

void require_same_shape(const Var& a, const Var& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::DimensionMismatch, std::string(op) + ": shape mismatch");
    }
}

// Unary elementwise op given the value and the derivative as a function of
// (input, output).
template <typename F, typename D>
Var unary(const Var& a, F f, D df)
{
    Tape& t = tape_of(a);
    Matrix out = a.value().unaryExpr(f);
    return t.record(out, t.needs_grad(a), [a, out, df](Tape& tp, const Matrix& g) {
        const Matrix& x = a.value();
        Matrix d(x.rows(), x.cols());
        for (Eigen::Index k = 0; k < x.size(); ++k) d(k) = df(x(k), out(k));
        tp.accumulate(a, g.cwiseProduct(d));
    });
}

}  // namespace

Var matmul(const Var& a, const Var& b)
{
    Tape& t = tape_of(a, b);
    if (a.cols() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matmul: inner dimensions differ");
    return t.record(a.value() * b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a, g * b.value().transpose());
        if (tp.needs_grad(b)) tp.accumulate(b, a.value().transpose() * g);
    });
}

Var add(const Var& a, const Var& b)
{
    Tape& t = tape_of(a, b);
    require_same_shape(a, b, "add");
    return t.record(a.value() + b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(const Var& a, const Var& b)
{
    Tape& t = tape_of(a, b);
    require_same_shape(a, b, "sub");
    return t.record(a.value() - b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.needs_grad(b)) tp.accumulate(b, -g);
    });
}

Var mul(const Var& a, const Var& b)
{
    Tape& t = tape_of(a, b);
    require_same_shape(a, b, "mul");
    return t.record(a.value().cwiseProduct(b.value()), t.needs_grad(a) || t.needs_grad(b),
                    [a, b](Tape& tp, const Matrix& g) {
                        if (tp.needs_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
                        if (tp.needs_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
                    });
}

Var scale(const Var& a, double s)
{
    Tape& t = tape_of(a);
    return t.record(a.value() * s, t.needs_grad(a), [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s)
{
    Tape& t = tape_of(a);
    return t.record(a.value().array() + s, t.needs_grad(a), [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& r)
{
    Tape& t = tape_of(a, r);
    if (r.rows() != 1 || r.cols() != a.cols()) throw Error(ErrorCode::DimensionMismatch, "add_row: bad row shape");
    Matrix out = a.value();
    out.rowwise() += r.value().row(0);
    return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(r), [a, r](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.needs_grad(r)) tp.accumulate(r, g.colwise().sum());
    });
}

Var relu(const Var& a)
{
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var hinge(const Var& a)
{
    return relu(a);
}

Var sigmoid(const Var& a, double k)
{
    return unary(
        a,
        [k](double x) {
            const double z = k * x;
            if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
            const double e = std::exp(z);
            return e / (1.0 + e);
        },
        [k](double, double y) { return k * y * (1.0 - y); });
}

Var square(const Var& a)
{
    return unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_safe(const Var& a)
{
    return unary(
        a, [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var cos(const Var& a)
{
    return unary(
        a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var exp(const Var& a)
{
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a)
{
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sum(const Var& a)
{
    Tape& t = tape_of(a);
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    const auto r = a.rows();
    const auto c = a.cols();
    return t.record(std::move(out), t.needs_grad(a),
                    [a, r, c](Tape& tp, const Matrix& g) { tp.accumulate(a, Matrix::Constant(r, c, g(0, 0))); });
}

Var mean(const Var& a)
{
    const auto n = static_cast<double>(a.value().size());
    return scale(sum(a), n > 0 ? 1.0 / n : 0.0);
}

Var row_sums(const Var& a)
{
    Tape& t = tape_of(a);
    const auto c = a.cols();
    return t.record(a.value().rowwise().sum(), t.needs_grad(a),
                    [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a, g.replicate(1, c)); });
}

Var logsumexp_rows(const Var& a, double tau)
{
    Tape& t = tape_of(a);
    if (!(tau > 0.0)) throw Error(ErrorCode::BadConfig, "logsumexp_rows: tau must be positive");
    const Matrix& x = a.value();
    Matrix out(x.rows(), 1);
    Matrix weights(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        const Eigen::RowVectorXd e = ((x.row(i).array() - m) / tau).exp();
        const double s = e.sum();
        out(i, 0) = m + tau * std::log(s);
        weights.row(i) = e / s;
    }
    return t.record(std::move(out), t.needs_grad(a), [a, weights](Tape& tp, const Matrix& g) {
        tp.accumulate(a, weights.array().colwise() * g.col(0).array());
    });
}

Var gather_cols(const Var& a, const std::vector<int>& cols)
{
    Tape& t = tape_of(a);
    const Matrix& x = a.value();
    Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] < 0 || cols[k] >= x.cols()) throw Error(ErrorCode::DimensionMismatch, "gather_cols: index");
        out.col(static_cast<Eigen::Index>(k)) = x.col(cols[k]);
    }
    return t.record(std::move(out), t.needs_grad(a), [a, cols](Tape& tp, const Matrix& g) {
        Matrix d = Matrix::Zero(a.rows(), a.cols());
        for (std::size_t k = 0; k < cols.size(); ++k) d.col(cols[k]) += g.col(static_cast<Eigen::Index>(k));
        tp.accumulate(a, d);
    });
}

namespace {

Matrix rows_to_blocks_value(const Matrix& x, int n)
{
    const Eigen::Index b = x.rows();
    const Eigen::Index d = x.cols() / n;
    Matrix out(b * n, d);
    for (Eigen::Index s = 0; s < b; ++s) {
        for (int i = 0; i < n; ++i) out.row(s * n + i) = x.block(s, i * d, 1, d);
    }
    return out;
}

Matrix blocks_to_rows_value(const Matrix& x, int n)
{
    const Eigen::Index b = x.rows() / n;
    const Eigen::Index d = x.cols();
    Matrix out(b, n * d);
    for (Eigen::Index s = 0; s < b; ++s) {
        for (int i = 0; i < n; ++i) out.block(s, i * d, 1, d) = x.row(s * n + i);
    }
    return out;
}

}  // namespace

Var rows_to_blocks(const Var& a, int n)
{
    Tape& t = tape_of(a);
    if (n <= 0 || a.cols() % n != 0) throw Error(ErrorCode::DimensionMismatch, "rows_to_blocks: width");
    return t.record(rows_to_blocks_value(a.value(), n), t.needs_grad(a),
                    [a, n](Tape& tp, const Matrix& g) { tp.accumulate(a, blocks_to_rows_value(g, n)); });
}

Var blocks_to_rows(const Var& a, int n)
{
    Tape& t = tape_of(a);
    if (n <= 0 || a.rows() % n != 0) throw Error(ErrorCode::DimensionMismatch, "blocks_to_rows: height");
    return t.record(blocks_to_rows_value(a.value(), n), t.needs_grad(a),
                    [a, n](Tape& tp, const Matrix& g) { tp.accumulate(a, rows_to_blocks_value(g, n)); });
}

Var graph_filter(const Var& x, const Var& w, const GraphMask& mask)
{
    Tape& t = tape_of(x, w);
    const int n = mask.size();
    if (w.rows() != n || w.cols() != n || x.rows() % n != 0) {
        throw Error(ErrorCode::DimensionMismatch, "graph_filter: shapes do not match the mask");
    }
    const auto& entries = mask.entries();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(entries.size());
    for (const auto& [i, j] : entries) trips.emplace_back(i, j, w.value()(i, j));
    Eigen::SparseMatrix<double, Eigen::RowMajor> ws(n, n);
    ws.setFromTriplets(trips.begin(), trips.end());

    const Matrix& xv = x.value();
    const Eigen::Index blocks = xv.rows() / n;
    Matrix out(xv.rows(), xv.cols());
    for (Eigen::Index b = 0; b < blocks; ++b) out.middleRows(b * n, n) = ws * xv.middleRows(b * n, n);

    return t.record(std::move(out), t.needs_grad(x) || t.needs_grad(w),
                    [x, w, ws, entries, n, blocks](Tape& tp, const Matrix& g) {
                        const Matrix& xv = x.value();
                        if (tp.needs_grad(x)) {
                            Matrix dx(xv.rows(), xv.cols());
                            const Eigen::SparseMatrix<double, Eigen::RowMajor> wt = ws.transpose();
                            for (Eigen::Index b = 0; b < blocks; ++b) {
                                dx.middleRows(b * n, n) = wt * g.middleRows(b * n, n);
                            }
                            tp.accumulate(x, dx);
                        }
                        if (tp.needs_grad(w)) {
                            Matrix dw = Matrix::Zero(n, n);
                            for (const auto& [i, j] : entries) {
                                double acc = 0.0;
                                for (Eigen::Index b = 0; b < blocks; ++b) {
                                    acc += g.row(b * n + i).dot(xv.row(b * n + j));
                                }
                                dw(i, j) = acc;
                            }
                            tp.accumulate(w, dw);
                        }
                    });
}

Var node_head(const Var& x, const Var& w, const Var& bias)
{
    Tape& t = tape_of(x, w);
    t.check(bias);
    const Eigen::Index n = w.rows();
    const Eigen::Index d = w.cols();
    if (x.cols() != d || x.rows() % n != 0 || bias.rows() != 1 || bias.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "node_head: shapes do not match");
    }
    const Matrix& xv = x.value();
    const Eigen::Index blocks = xv.rows() / n;
    Matrix out(blocks, n);
    for (Eigen::Index b = 0; b < blocks; ++b) {
        out.row(b) = xv.middleRows(b * n, n).cwiseProduct(w.value()).rowwise().sum().transpose() + bias.value();
    }
    const bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(bias);
    return t.record(std::move(out), ng, [x, w, bias, n, blocks](Tape& tp, const Matrix& g) {
        const Matrix& xv = x.value();
        if (tp.needs_grad(x)) {
            Matrix dx(xv.rows(), xv.cols());
            for (Eigen::Index b = 0; b < blocks; ++b) {
                dx.middleRows(b * n, n) = w.value().array().colwise() * g.row(b).transpose().array();
            }
            tp.accumulate(x, dx);
        }
        if (tp.needs_grad(w)) {
            Matrix dw = Matrix::Zero(w.rows(), w.cols());
            for (Eigen::Index b = 0; b < blocks; ++b) {
                dw.array() += xv.middleRows(b * n, n).array().colwise() * g.row(b).transpose().array();
            }
            tp.accumulate(w, dw);
        }
        if (tp.needs_grad(bias)) tp.accumulate(bias, g.colwise().sum());
    });
}

Var bce_with_logits(const Var& z, const Matrix& y, const Eigen::RowVectorXd& pos_weight)
{
    Tape& t = tape_of(z);
    if (y.rows() != z.rows() || y.cols() != z.cols() || pos_weight.size() != z.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "bce_with_logits: shapes do not match");
    }
    const Matrix& zv = z.value();
    const double count = static_cast<double>(zv.size());
    double total = 0.0;
    Matrix dz(zv.rows(), zv.cols());
    for (Eigen::Index c = 0; c < zv.cols(); ++c) {
        for (Eigen::Index r = 0; r < zv.rows(); ++r) {
            const double x = zv(r, c);
            // log(1 + e^-x) and log(1 + e^x), evaluated without overflow.
            const double sp_neg = std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)));
            const double sp_pos = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
            const double w = pos_weight(c);
            total += w * y(r, c) * sp_neg + (1.0 - y(r, c)) * sp_pos;
            const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            dz(r, c) = (w * y(r, c) * (s - 1.0) + (1.0 - y(r, c)) * s) / count;
        }
    }
    Matrix out(1, 1);
    out(0, 0) = count > 0 ? total / count : 0.0;
    return t.record(std::move(out), t.needs_grad(z),
                    [z, dz](Tape& tp, const Matrix& g) { tp.accumulate(z, dz * g(0, 0)); });
}

}  // namespace gridflow::ad
