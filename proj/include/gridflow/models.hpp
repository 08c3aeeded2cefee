#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/autodiff.hpp"
#include "gridflow/grid_model.hpp"

namespace gridflow {

enum class ModelKind { Gnn, Fcnn };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct ModelSpec {
    ModelKind kind = ModelKind::Gnn;
    int n_buses = 0;
    /// Per-node channel widths d_0 ... d_T; T = widths.size() - 1 hidden layers.
    std::vector<int> widths;
    /// Node-level regression heads, e.g. {"pi"} or {"pi", "vm"}.
    std::vector<std::string> outputs = {"pi"};
    /// Width of an optional dense classification layer over the flattened
    /// final embedding (0 = none).
    int n_logits = 0;

    int n_layers() const { return static_cast<int>(widths.size()) - 1; }
};

void validate(const ModelSpec& spec);

/// Trainable parameter counts. Masked graph filters count their support only.
long layer_parameter_count(const ModelSpec& spec, int mask_nnz, int layer);
long head_parameter_count(const ModelSpec& spec);
long total_parameter_count(const ModelSpec& spec, int mask_nnz);

struct ModelOutputs {
    std::map<std::string, ad::Var> channels;  ///< B x N per head
    ad::Var logits;                           ///< B x n_logits, when present
};

class Model {
public:
    virtual ~Model() = default;

    const ModelSpec& spec() const { return spec_; }
    std::vector<ad::Parameter>& parameters() { return params_; }
    const std::vector<ad::Parameter>& parameters() const { return params_; }
    ad::Parameter& parameter(const std::string& name);
    const ad::Parameter& parameter(const std::string& name) const;
    bool has_parameter(const std::string& name) const;

    /// x is B x (N d_0), node-major per row. Throws ShapeMismatch.
    virtual ModelOutputs forward(ad::Tape& tape, const Eigen::MatrixXd& x) = 0;
    virtual std::unique_ptr<Model> clone() const = 0;

    long parameter_count() const;
    /// Every stored entry, masked or not.
    long dense_parameter_count() const;
    void zero_grad();

protected:
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
    ad::Parameter& add_parameter(std::string name, Eigen::MatrixXd value);
    void check_input(const Eigen::MatrixXd& x) const;

    ModelSpec spec_;
    std::vector<ad::Parameter> params_;
};

/// X^{t+1} = relu(W^t X^t H^t + 1 b^t) with W^t on the mask support, then a
/// node-specific linear head per output channel.
class GnnModel : public Model {
public:
    /// filter_init (N x N) seeds every W^t; identity when null.
    GnnModel(ModelSpec spec, GraphMask mask, std::uint64_t seed, const Eigen::MatrixXd* filter_init = nullptr);

    const GraphMask& mask() const { return mask_; }
    /// Restrict the graph filters to a smaller support, zeroing removed entries.
    void set_mask(const GraphMask& mask);

    ModelOutputs forward(ad::Tape& tape, const Eigen::MatrixXd& x) override;
    std::unique_ptr<Model> clone() const override;

private:
    GraphMask mask_;
};

/// X^{t+1} = relu(W^t X^t + b^t) on the flattened N d_t vector, then a dense
/// linear head per output channel.
class FcnnModel : public Model {
public:
    FcnnModel(ModelSpec spec, std::uint64_t seed);

    ModelOutputs forward(ad::Tape& tape, const Eigen::MatrixXd& x) override;
    std::unique_ptr<Model> clone() const override;
};

/// D^-1/2 B D^-1/2 of the full (unreduced) B-bus, D = diag(B).
Eigen::MatrixXd normalized_bbus(const GridLinAlg& grid);

/// GNN filters start from normalized_bbus(grid); FCNN ignores the grid.
std::unique_ptr<Model> make_model(const ModelSpec& spec, const GridLinAlg& grid, std::uint64_t seed);

}  // namespace gridflow
