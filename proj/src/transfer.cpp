#include "gridflow/transfer.hpp"

#include <algorithm>
#include <chrono>

#include "gridflow/error.hpp"

namespace gridflow {

namespace {

double spectral_norm(const Eigen::MatrixXd& m)
{
    if (m.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

nlohmann::json spectral_json(const SpectralScenario& s)
{
    return {
        {"s", s.s},
        {"delta", s.constants.delta},
        {"delta_prime", s.constants.delta_prime},
        {"perturbation_fro", s.delta_fro},
        {"perturbation_l2", s.delta_l2},
        {"distance_fro", s.distance_fro},
        {"distance_l2", s.distance_l2},
        {"bound_fro", s.bound_fro.bound()},
        {"bound_l2", s.bound_l2.bound()},
        {"bound_fro_inverse_term", s.bound_fro.inverse_term},
        {"bound_fro_laplacian_term", s.bound_fro.laplacian_term},
        {"bound_l2_inverse_term", s.bound_l2.inverse_term},
        {"bound_l2_laplacian_term", s.bound_l2.laplacian_term},
    };
}

}  // namespace

TransferConfig default_transfer_config()
{
    TransferConfig c;
    c.train.max_epochs = 10;
    return c;
}

nlohmann::json to_json(const TransferReport& r, bool with_timing)
{
    std::vector<int> branches;
    for (int b : r.outaged_branches) branches.push_back(b + 1);
    nlohmann::json j = {
        {"scenario", r.scenario_id},
        {"outaged_lines", r.outaged_lines},
        {"branches", branches},
        {"samples", r.samples},
        {"pre_trained", to_json(r.pre_trained, with_timing)},
        {"re_trained", to_json(r.re_trained, with_timing)},
        {"retrain_epochs", r.retrain_epochs},
        {"delta_h", r.delta_h},
    };
    if (r.spectral) j["spectral"] = spectral_json(*r.spectral);
    if (!r.spectral_note.empty()) j["spectral_note"] = r.spectral_note;
    if (with_timing) j["retrain_seconds"] = r.retrain_seconds;
    return j;
}

double filter_perturbation(const Model& original, const Model& transferred)
{
    const ModelSpec& a = original.spec();
    const ModelSpec& b = transferred.spec();
    if (a.kind != ModelKind::Gnn || b.kind != ModelKind::Gnn) {
        throw Error(ErrorCode::ShapeMismatch, "filter perturbation needs two GNN models");
    }
    if (a.widths != b.widths || a.n_buses != b.n_buses) throw Error(ErrorCode::ShapeMismatch, "layer structures differ");
    const int t_count = a.n_layers();
    double total = 0.0;
    for (int t = 0; t < t_count; ++t) {
        const std::string name = "H" + std::to_string(t);
        const Eigen::MatrixXd& h0 = original.parameter(name).value;
        const Eigen::MatrixXd& h1 = transferred.parameter(name).value;
        const double base = spectral_norm(h0);
        if (base == 0.0) throw Error(ErrorCode::ShapeMismatch, name + " of the original model is zero");
        total += spectral_norm(h1 - h0) / base;
    }
    return total / t_count;
}

std::vector<std::vector<int>> candidate_outage_pairs(const GridLinAlg& grid, const Eigen::VectorXd& frequency, int pool)
{
    if (frequency.size() != grid.n_lines()) throw Error(ErrorCode::DimensionMismatch, "frequency per line expected");
    std::vector<int> top = top_binding_lines(frequency, pool);
    std::vector<std::vector<int>> pairs;
    for (std::size_t i = 0; i < top.size(); ++i) {
        for (std::size_t j = i + 1; j < top.size(); ++j) {
            std::vector<int> pair = {std::min(top[i], top[j]), std::max(top[i], top[j])};
            if (islands_without(grid, pair).size() == 1) pairs.push_back(pair);
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& x, const auto& y) {
        auto rank = [&](int line) { return std::find(top.begin(), top.end(), line) - top.begin(); };
        return std::max(rank(x[0]), rank(x[1])) < std::max(rank(y[0]), rank(y[1]));
    });
    return pairs;
}

TransferResult topology_transfer(const TrainedModel& model, const GridLinAlg& grid, const std::vector<int>& outaged_lines,
                                 const DatasetFile& new_data, const TransferConfig& config)
{
    validate(config.train);
    const Contingency post = apply_outage(grid, outaged_lines);
    check_dataset_matches(new_data, post.post_grid);
    if (config.original_samples > 0 && 2 * new_data.n_samples() > config.original_samples) {
        throw Error(ErrorCode::BadConfig, "retraining may use at most half of the original sample count");
    }

    TransferResult res;
    TransferReport& r = res.report;
    r.scenario_id = config.scenario_id;
    r.outaged_lines = outaged_lines;
    for (int l : outaged_lines) r.outaged_branches.push_back(grid.lines[l].branch_row);
    r.samples = new_data.n_samples();

    res.model = model;
    if (GnnModel* gnn = res.model.gnn()) gnn->set_mask(gnn_mask(post.post_grid));

    TrainConfig cfg = config.train;
    const Split split = split_dataset(new_data.n_samples(), cfg.train_fraction, cfg.validation_fraction, cfg.seed);
    if (split.test.empty()) throw Error(ErrorCode::EmptyTestSet, "the test split is empty");
    if (cfg.fr_top_k > 0) {
        cfg.loss.active_lines = top_binding_lines(binding_frequency(new_data, split.train), cfg.fr_top_k);
    } else {
        std::vector<int> refreshed;
        for (int a : cfg.loss.active_lines) {
            const auto it = std::find(post.surviving.begin(), post.surviving.end(), a);
            if (it != post.surviving.end()) refreshed.push_back(static_cast<int>(it - post.surviving.begin()));
        }
        cfg.loss.active_lines = refreshed;
    }

    r.pre_trained = evaluate(res.model, new_data, post.post_grid, split.test);
    const auto t0 = std::chrono::steady_clock::now();
    const History h = fit(res.model, new_data, post.post_grid, split.train, split.validation, cfg);
    r.retrain_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.retrain_epochs = h.epochs;
    r.re_trained = evaluate(res.model, new_data, post.post_grid, split.test);
    r.re_trained.epochs = h.epochs;
    r.re_trained.train_seconds = r.retrain_seconds;
    if (model.model->spec().kind == ModelKind::Gnn) r.delta_h = filter_perturbation(*model.model, *res.model.model);

    if (!outaged_lines.empty()) {
        try {
            const EigenBasis basis = eigendecompose_spd(grid.b_inv);
            const int s = config.spectral_s > 0 ? std::min(config.spectral_s, basis.size())
                                                : choose_subspace_dimension(basis).s;
            r.spectral = analyze_outage(grid, basis, outaged_lines, s);
        } catch (const Error& e) {
            r.spectral_note = e.what();
        }
    }

    res.model.info["transfer"] = {{"scenario", r.scenario_id},
                                  {"outaged_branches", r.outaged_branches},
                                  {"retrain_epochs", r.retrain_epochs},
                                  {"best_epoch", h.best_epoch}};
    res.model.info["train_config"] = to_json(cfg);
    return res;
}

}  // namespace gridflow
