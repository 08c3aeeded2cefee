#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/grid_model.hpp"

namespace gridflow::ad {

using Matrix = Eigen::MatrixXd;

/// Trainable array. `support`, when non-empty, is a 0/1 pattern of the same
/// shape; entries outside it are held at exactly zero.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix support;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
    void apply_support()
    {
        if (support.size() > 0) value = value.cwiseProduct(support);
    }
};

class Tape;

/// Handle to a node on a tape.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, int id, std::uint64_t generation) : tape_(tape), id_(id), generation_(generation) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
    std::uint64_t generation_ = 0;
};

/// Records operations in creation order (a topological order) and replays
/// them backwards. Not thread safe; use one tape per thread.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix&)>;

    Var constant(Matrix value);
    /// Differentiable leaf; read its gradient with grad() after backward().
    Var variable(Matrix value);
    /// Leaf bound to a parameter; backward() adds into parameter.grad.
    Var parameter(Parameter& p);

    /// Reverse sweep from a 1x1 node. Throws GraphNotRecorded for handles that
    /// do not belong to the current recording.
    void backward(const Var& loss);
    const Matrix& grad(const Var& v) const;
    const Matrix& value(const Var& v) const;

    /// Drop all nodes; existing handles become invalid.
    void clear();
    std::size_t size() const { return nodes_.size(); }

    // Op construction.
    Var record(Matrix value, bool needs_grad, Backward backward);
    bool needs_grad(const Var& v) const { return nodes_[v.id_].needs_grad; }
    /// Add g into the gradient slot of v (no-op for constants).
    void accumulate(const Var& v, const Matrix& g);
    void check(const Var& v) const;

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        Parameter* param = nullptr;
        Backward backward;
    };

    std::vector<Node> nodes_;
    std::uint64_t generation_ = 1;
    bool swept_ = false;
};

// Elementwise and dense algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a + 1 r, with r a 1 x cols row broadcast over every row.
Var add_row(const Var& a, const Var& r);

Var relu(const Var& a);
/// 1 / (1 + exp(-k a)).
Var sigmoid(const Var& a, double k = 1.0);
Var square(const Var& a);
/// sqrt with a zero derivative at 0.
Var sqrt_safe(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// max(0, a).
Var hinge(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// rows x 1 sums.
Var row_sums(const Var& a);
/// rows x 1 smooth maximum tau * log(sum_j exp(a_ij / tau)).
Var logsumexp_rows(const Var& a, double tau);

/// Select columns (repeats allowed); the backward pass scatter-adds.
Var gather_cols(const Var& a, const std::vector<int>& cols);

/// Batch layout helpers: a batch of B samples with N nodes and d channels is
/// either B x (N d) (node-major rows, as stored in datasets) or (B N) x d
/// (one block of N rows per sample).
Var rows_to_blocks(const Var& a, int n);
Var blocks_to_rows(const Var& a, int n);

/// Masked graph filter: each N-row block X_b of x becomes W X_b, using only
/// the entries of W on the mask support. Gradients of W are zero off the mask.
Var graph_filter(const Var& x, const Var& w, const GraphMask& mask);

/// Node-specific linear head: out(b, i) = sum_c x_b(i, c) w(i, c) + bias(i).
/// x is (B N) x d, w is N x d, bias is 1 x N; output B x N.
Var node_head(const Var& x, const Var& w, const Var& bias);

/// Mean binary cross-entropy with logits z against 0/1 targets y, positive
/// terms weighted per column by pos_weight (1 x K).
Var bce_with_logits(const Var& z, const Matrix& y, const Eigen::RowVectorXd& pos_weight);

}  // namespace gridflow::ad
