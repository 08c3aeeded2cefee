#include "gridflow/congestion.hpp"

#include <algorithm>
#include <chrono>

#include "gridflow/error.hpp"

namespace gridflow {

void validate(const CongestionConfig& c)
{
    validate(c.train);
    if (c.top_k <= 0) throw Error(ErrorCode::BadConfig, "top_k must be positive");
    if (!(c.max_pos_weight >= 1.0)) throw Error(ErrorCode::BadConfig, "max_pos_weight must be at least 1");
}

CongestionResult congestion_classify(const DatasetFile& data, const GridLinAlg& grid, const CongestionConfig& config)
{
    validate(config);
    check_dataset_matches(data, grid);
    const TrainConfig& tc = config.train;
    const auto t0 = std::chrono::steady_clock::now();

    CongestionResult res;
    res.split = split_dataset(data.n_samples(), tc.train_fraction, tc.validation_fraction, tc.seed);
    if (res.split.test.empty()) throw Error(ErrorCode::EmptyTestSet, "the test split is empty");

    const Eigen::VectorXd freq = binding_frequency(data, res.split.train);
    res.active_lines = top_binding_lines(freq, config.top_k);
    res.train_frequency.resize(static_cast<Eigen::Index>(res.active_lines.size()));
    ClassifierTarget target;
    target.lines = res.active_lines;
    target.pos_weight.resize(static_cast<Eigen::Index>(res.active_lines.size()));
    for (std::size_t k = 0; k < res.active_lines.size(); ++k) {
        const double f = freq(res.active_lines[k]);
        if (f <= 0.0) {
            throw Error(ErrorCode::NoBindingEvents,
                        "line " + std::to_string(res.active_lines[k]) + " never binds in the training split");
        }
        const auto i = static_cast<Eigen::Index>(k);
        res.train_frequency(i) = f;
        target.pos_weight(i) = std::clamp((1.0 - f) / f, 1.0, config.max_pos_weight);
    }

    ModelSpec spec;
    spec.kind = ModelKind::Gnn;
    spec.n_buses = grid.n_buses;
    spec.widths = tc.widths;
    spec.outputs = {};
    spec.n_logits = static_cast<int>(res.active_lines.size());
    res.model.scaler = fit_standardizer(data, res.split.train, tc.features, {});
    res.model.model = make_model(spec, grid, tc.seed);
    res.model.info["active_lines"] = res.active_lines;

    res.history = fit(res.model, data, grid, res.split.train, res.split.validation, tc, &target);

    const Eigen::MatrixXd logits = predict(res.model, data, res.split.test).at("logits");
    const Eigen::MatrixXd all = data.label_block(kBindingChannel);
    Eigen::MatrixXd truth(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < truth.rows(); ++r) {
        for (std::size_t k = 0; k < res.active_lines.size(); ++k) {
            truth(r, static_cast<Eigen::Index>(k)) = all(res.split.test[static_cast<std::size_t>(r)], res.active_lines[k]);
        }
    }
    res.summary = classification_summary(truth, (logits.array() > 0.0).cast<double>().matrix());
    res.report.n_samples = static_cast<int>(res.split.test.size());
    res.report.has_classification = true;
    res.report.recall = res.summary.macro_recall;
    res.report.f1 = res.summary.macro_f1;
    res.report.epochs = res.history.epochs;
    res.report.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.model.info["train_config"] = to_json(tc);
    res.model.info["epochs"] = res.history.epochs;
    return res;
}

}  // namespace gridflow
