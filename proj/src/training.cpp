#include "gridflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "gridflow/error.hpp"
#include "gridflow/metrics.hpp"
#include "gridflow/random.hpp"

namespace gridflow {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974;  // "split"
constexpr std::uint64_t kEpochStream = 0x65706f6368;  // "epoch"
constexpr int kPredictChunk = 512;

int feature_index(const DatasetHeader& h, const std::string& name)
{
    const auto it = std::find(h.feature_names.begin(), h.feature_names.end(), name);
    if (it == h.feature_names.end()) throw Error(ErrorCode::MissingChannel, "dataset has no feature " + name);
    return static_cast<int>(it - h.feature_names.begin());
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& rows)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
    return out;
}

ChainInputs chain_rows(const ChainInputs& in, const std::vector<int>& rows)
{
    return {rows_of(in.a, rows), rows_of(in.b, rows), rows_of(in.p_min, rows), rows_of(in.p_max, rows)};
}

// Everything one split needs during fitting, gathered once.
struct Block {
    Eigen::MatrixXd x;
    std::map<std::string, Eigen::MatrixXd> targets;  // standardized
    ChainInputs chain;
    Eigen::MatrixXd p_target;
    Eigen::MatrixXd binding;
    int size() const { return static_cast<int>(x.rows()); }
};

struct Objective {
    const TrainedModel& trained;
    const GridLinAlg& grid;
    const LossConfig& loss;
    const ClassifierTarget* classifier;
    bool needs_chain = false;
    Eigen::RowVectorXd inv_limits;

    ad::Var operator()(ad::Tape& tape, Model& model, const Block& b, bool training) const
    {
        const ModelOutputs out = model.forward(tape, b.x);
        if (classifier != nullptr) return ad::bce_with_logits(out.logits, b.binding, classifier->pos_weight);

        LossInputs li;
        li.predictions = out.channels;
        li.targets = b.targets;
        if (needs_chain) {
            const auto& sc = trained.scaler;
            const ad::Var pi = ad::add_scalar(ad::scale(out.channels.at("pi"), sc.label_std.at("pi")),
                                              sc.label_mean.at("pi"));
            const ad::Var rel = tape.constant(inv_limits.replicate(b.size(), 1));
            const Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.n_lines());
            if (loss.fr_mode == FrMode::Ac) {
                const ad::Var vm = ad::add_scalar(ad::scale(out.channels.at("vm"), sc.label_std.at("vm")),
                                                  sc.label_mean.at("vm"));
                const AcChain c = latent_chain_ac(pi, vm, b.chain, grid, training, loss.sharpness);
                li.fr = ad::add(fr_penalty(ad::mul(c.s.from_to, rel), ones, loss.active_lines, false,
                                           loss.smooth_hinge, loss.hinge_sharpness),
                                fr_penalty(ad::mul(c.s.to_from, rel), ones, loss.active_lines, false,
                                           loss.smooth_hinge, loss.hinge_sharpness));
                li.p_hat = c.p;
            } else {
                const DcChain c = latent_chain_dc(pi, b.chain, grid, training, loss.sharpness);
                li.fr = fr_penalty(ad::mul(c.flows, rel), ones, loss.active_lines, true, loss.smooth_hinge,
                                   loss.hinge_sharpness);
                li.p_hat = c.p;
            }
            li.p_target = b.p_target;
        }
        return composite_loss(li, loss).total;
    }
};

Block make_block(const TrainedModel& trained, const DatasetFile& data, const std::vector<int>& rows,
                 bool needs_chain, const ClassifierTarget* classifier)
{
    Block b;
    b.x = model_inputs(data, rows, trained.scaler);
    if (classifier != nullptr) {
        const Eigen::MatrixXd all = data.label_block(kBindingChannel);
        b.binding.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(classifier->lines.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t k = 0; k < classifier->lines.size(); ++k) {
                b.binding(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                    all(rows[r], classifier->lines[k]);
            }
        }
        return b;
    }
    for (const auto& ch : trained.model->spec().outputs) {
        if (!data.header.has_label(ch)) throw Error(ErrorCode::MissingChannel, "dataset has no label " + ch);
        const double mu = trained.scaler.label_mean.at(ch);
        const double sd = trained.scaler.label_std.at(ch);
        b.targets[ch] = ((rows_of(data.label_block(ch), rows).array() - mu) / sd).matrix();
    }
    if (needs_chain) {
        b.chain = chain_inputs(data, rows);
        if (data.header.has_label("p")) b.p_target = rows_of(data.label_block("p"), rows);
    }
    return b;
}

Block slice(const Block& b, const std::vector<int>& rows)
{
    Block s;
    s.x = rows_of(b.x, rows);
    for (const auto& [ch, m] : b.targets) s.targets[ch] = rows_of(m, rows);
    if (b.chain.a.size() > 0) s.chain = chain_rows(b.chain, rows);
    if (b.p_target.size() > 0) s.p_target = rows_of(b.p_target, rows);
    if (b.binding.size() > 0) s.binding = rows_of(b.binding, rows);
    return s;
}

double checked(double loss)
{
    if (!std::isfinite(loss)) throw Error(ErrorCode::Diverged, "training loss is not finite");
    return loss;
}

}  // namespace

void validate(const TrainConfig& c)
{
    if (c.widths.size() < 2) throw Error(ErrorCode::BadConfig, "widths need an input and at least one layer");
    if (c.widths.front() != static_cast<int>(c.features.size())) {
        throw Error(ErrorCode::BadConfig, "first width must equal the number of input features");
    }
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
        throw Error(ErrorCode::BadConfig, "train_fraction must lie in (0, 1)");
    }
    if (!(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0)) {
        throw Error(ErrorCode::BadConfig, "validation_fraction must lie in [0, 1)");
    }
    if (c.batch_size <= 0 || c.max_epochs < 0 || c.patience <= 0 || !(c.min_delta >= 0.0) || c.fr_top_k < 0) {
        throw Error(ErrorCode::BadConfig, "batch size, epochs, patience and min_delta must be positive");
    }
    validate(c.loss);
    validate(c.adam);
}

nlohmann::json to_json(const TrainConfig& c)
{
    return {
        {"model", to_string(c.kind)},
        {"widths", c.widths},
        {"features", c.features},
        {"gamma_pi", c.loss.gamma_pi},
        {"gamma_v", c.loss.gamma_v},
        {"gamma_fr", c.loss.gamma_fr},
        {"gamma_p", c.loss.gamma_p},
        {"use_linf_pi", c.loss.use_linf_pi},
        {"fr_mode", to_string(c.loss.fr_mode)},
        {"active_lines", c.loss.active_lines},
        {"fr_top_k", c.fr_top_k},
        {"sharpness", c.loss.sharpness},
        {"lr", c.adam.lr},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"eps", c.adam.eps},
        {"batch_size", c.batch_size},
        {"max_epochs", c.max_epochs},
        {"patience", c.patience},
        {"min_delta", c.min_delta},
        {"train_fraction", c.train_fraction},
        {"validation_fraction", c.validation_fraction},
        {"seed", c.seed},
    };
}

Split split_dataset(int n, double train_fraction, double validation_fraction, std::uint64_t seed)
{
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = keyed_rng(seed, kSplitStream);
    shuffle(perm, rng);
    const int n_train_all = static_cast<int>(std::lround(n * train_fraction));
    const int n_val = static_cast<int>(std::lround(n_train_all * validation_fraction));
    Split s;
    s.train.assign(perm.begin(), perm.begin() + (n_train_all - n_val));
    s.validation.assign(perm.begin() + (n_train_all - n_val), perm.begin() + n_train_all);
    s.test.assign(perm.begin() + n_train_all, perm.end());
    for (auto* v : {&s.train, &s.validation, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

Standardizer fit_standardizer(const DatasetFile& data, const std::vector<int>& rows,
                              const std::vector<std::string>& features, const std::vector<std::string>& labels)
{
    if (rows.empty()) throw Error(ErrorCode::EmptyTestSet, "cannot standardize on zero samples");
    const DatasetHeader& h = data.header;
    const int d = h.n_features();
    const int n = h.n_buses;
    Standardizer s;
    s.feature_names = features;
    s.feature_mean.resize(static_cast<Eigen::Index>(features.size()));
    s.feature_std.resize(static_cast<Eigen::Index>(features.size()));
    for (std::size_t f = 0; f < features.size(); ++f) {
        const int col = feature_index(h, features[f]);
        double sum = 0.0;
        for (int r : rows) {
            for (int i = 0; i < n; ++i) sum += data.features(r, i * d + col);
        }
        const double count = static_cast<double>(rows.size()) * n;
        const double mean = sum / count;
        double var = 0.0;
        for (int r : rows) {
            for (int i = 0; i < n; ++i) {
                const double e = data.features(r, i * d + col) - mean;
                var += e * e;
            }
        }
        const double sd = std::sqrt(var / count);
        s.feature_mean(static_cast<Eigen::Index>(f)) = mean;
        s.feature_std(static_cast<Eigen::Index>(f)) = sd > 1e-12 ? sd : 1.0;
    }
    for (const auto& ch : labels) {
        if (!h.has_label(ch)) throw Error(ErrorCode::MissingChannel, "dataset has no label " + ch);
        const Eigen::MatrixXd block = rows_of(data.label_block(ch), rows);
        const double mean = block.mean();
        const double sd = std::sqrt((block.array() - mean).square().mean());
        s.label_mean[ch] = mean;
        s.label_std[ch] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Eigen::MatrixXd model_inputs(const DatasetFile& data, const std::vector<int>& rows, const Standardizer& scaler)
{
    const DatasetHeader& h = data.header;
    const int d = h.n_features();
    const int n = h.n_buses;
    const int k = static_cast<int>(scaler.feature_names.size());
    std::vector<int> cols;
    for (const auto& f : scaler.feature_names) cols.push_back(feature_index(h, f));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), n * k);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int i = 0; i < n; ++i) {
            for (int f = 0; f < k; ++f) {
                x(static_cast<Eigen::Index>(r), i * k + f) =
                    (data.features(rows[r], i * d + cols[f]) - scaler.feature_mean(f)) / scaler.feature_std(f);
            }
        }
    }
    return x;
}

ChainInputs chain_inputs(const DatasetFile& data, const std::vector<int>& rows)
{
    const DatasetHeader& h = data.header;
    const int d = h.n_features();
    const int n = h.n_buses;
    const int ia = feature_index(h, "a");
    const int ib = feature_index(h, "b");
    const int ilo = feature_index(h, "pmin");
    const int ihi = feature_index(h, "pmax");
    const auto b = static_cast<Eigen::Index>(rows.size());
    ChainInputs in{Eigen::MatrixXd(b, n), Eigen::MatrixXd(b, n), Eigen::MatrixXd(b, n), Eigen::MatrixXd(b, n)};
    for (Eigen::Index r = 0; r < b; ++r) {
        for (int i = 0; i < n; ++i) {
            in.a(r, i) = data.features(rows[r], i * d + ia);
            in.b(r, i) = data.features(rows[r], i * d + ib);
            in.p_min(r, i) = data.features(rows[r], i * d + ilo);
            in.p_max(r, i) = data.features(rows[r], i * d + ihi);
        }
    }
    return in;
}

Eigen::VectorXd binding_frequency(const DatasetFile& data, const std::vector<int>& rows)
{
    if (!data.header.has_label(kBindingChannel)) throw Error(ErrorCode::MissingChannel, "dataset has no binding flags");
    if (rows.empty()) return Eigen::VectorXd::Zero(data.header.n_lines);
    return rows_of(data.label_block(kBindingChannel), rows).colwise().mean().transpose();
}

std::vector<int> top_binding_lines(const Eigen::VectorXd& frequency, int k)
{
    std::vector<int> idx(frequency.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return frequency(a) > frequency(b); });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(k, 0))));
    return idx;
}

History fit(TrainedModel& trained, const DatasetFile& data, const GridLinAlg& grid,
            const std::vector<int>& train_rows, const std::vector<int>& val_rows, const TrainConfig& config,
            const ClassifierTarget* classifier)
{
    if (train_rows.empty()) throw Error(ErrorCode::EmptyTestSet, "no training samples");
    Model& model = *trained.model;
    const LossConfig& loss = config.loss;
    Objective objective{trained, grid, loss, classifier, false, {}};
    objective.needs_chain = classifier == nullptr && ((loss.fr_mode != FrMode::None && loss.gamma_fr > 0.0) ||
                                                      loss.gamma_p > 0.0);
    if (objective.needs_chain) {
        const Eigen::VectorXd lim = grid.limits();
        if ((lim.array() <= 0.0).any()) throw Error(ErrorCode::BadConfig, "feasibility penalty needs positive limits");
        objective.inv_limits = lim.cwiseInverse().transpose();
    }

    const Block train_block = make_block(trained, data, train_rows, objective.needs_chain, classifier);
    const Block val_block =
        make_block(trained, data, val_rows.empty() ? train_rows : val_rows, objective.needs_chain, classifier);

    auto validation_loss = [&] {
        ad::Tape tape;
        return checked(objective(tape, model, val_block, false).value()(0, 0));
    };

    Adam adam(config.adam);
    History h;
    double best = validation_loss();
    h.validation_loss.push_back(best);
    std::vector<Eigen::MatrixXd> best_values;
    for (const auto& p : model.parameters()) best_values.push_back(p.value);

    const int n = train_block.size();
    int since = 0;
    ad::Tape tape;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        auto rng = keyed_rng(config.seed, kEpochStream, static_cast<std::uint64_t>(epoch));
        shuffle(order, rng);
        double total = 0.0;
        for (int start = 0; start < n; start += config.batch_size) {
            const int stop = std::min(n, start + config.batch_size);
            const std::vector<int> batch(order.begin() + start, order.begin() + stop);
            const Block b = slice(train_block, batch);
            tape.clear();
            model.zero_grad();
            const ad::Var l = objective(tape, model, b, true);
            total += checked(l.value()(0, 0)) * (stop - start);
            tape.backward(l);
            adam.step(model.parameters());
        }
        h.train_loss.push_back(total / n);
        const double val = validation_loss();
        h.validation_loss.push_back(val);
        h.epochs = epoch;
        if (val < best - config.min_delta) {
            best = val;
            h.best_epoch = epoch;
            for (std::size_t k = 0; k < best_values.size(); ++k) best_values[k] = model.parameters()[k].value;
            since = 0;
        } else if (++since >= config.patience) {
            break;
        }
    }
    for (std::size_t k = 0; k < best_values.size(); ++k) model.parameters()[k].value = best_values[k];
    return h;
}

nlohmann::json to_json(const EvalReport& r, bool with_timing)
{
    nlohmann::json j = {
        {"n_samples", r.n_samples},
        {"nmse_pi", r.nmse_pi},
        {"std_pi", r.std_pi},
        {"nmse_g", r.nmse_g},
        {"std_g", r.std_g},
        {"feasibility_violation", r.feasibility_violation},
        {"label_violation", r.label_violation},
        {"epochs", r.epochs},
    };
    if (r.has_v) {
        j["nmse_v"] = r.nmse_v;
        j["std_v"] = r.std_v;
    }
    if (r.has_classification) {
        j["recall"] = r.recall;
        j["f1"] = r.f1;
    }
    if (with_timing) j["train_seconds"] = r.train_seconds;
    return j;
}

std::map<std::string, Eigen::MatrixXd> predict(TrainedModel& trained, const DatasetFile& data,
                                               const std::vector<int>& rows)
{
    Model& model = *trained.model;
    if (model.spec().n_buses != data.header.n_buses) {
        throw Error(ErrorCode::ShapeMismatch, "model and dataset bus counts differ");
    }
    std::map<std::string, Eigen::MatrixXd> out;
    const auto total = static_cast<Eigen::Index>(rows.size());
    ad::Tape tape;
    for (std::size_t start = 0; start < rows.size(); start += kPredictChunk) {
        const std::size_t stop = std::min(rows.size(), start + kPredictChunk);
        const std::vector<int> chunk(rows.begin() + static_cast<long>(start), rows.begin() + static_cast<long>(stop));
        tape.clear();
        const ModelOutputs o = model.forward(tape, model_inputs(data, chunk, trained.scaler));
        auto put = [&](const std::string& name, const Eigen::MatrixXd& v) {
            auto& dst = out[name];
            if (dst.size() == 0) dst.resize(total, v.cols());
            dst.middleRows(static_cast<Eigen::Index>(start), v.rows()) = v;
        };
        for (const auto& [ch, var] : o.channels) {
            const double mu = trained.scaler.label_mean.at(ch);
            const double sd = trained.scaler.label_std.at(ch);
            put(ch, (var.value().array() * sd + mu).matrix());
        }
        if (o.logits.valid()) put("logits", o.logits.value());
    }
    return out;
}

EvalReport evaluate(TrainedModel& trained, const DatasetFile& data, const GridLinAlg& grid,
                    const std::vector<int>& rows)
{
    if (rows.empty()) throw Error(ErrorCode::EmptyTestSet, "no samples to evaluate");
    check_dataset_matches(data, grid);
    const auto pred = predict(trained, data, rows);
    EvalReport r;
    r.n_samples = static_cast<int>(rows.size());
    const Eigen::VectorXd limits = grid.limits();

    if (pred.count("pi") > 0) {
        const Eigen::MatrixXd& pi = pred.at("pi");
        const NmseStats s = nmse(pi, rows_of(data.label_block("pi"), rows));
        r.nmse_pi = s.mean;
        r.std_pi = s.std;

        const ChainInputs in = chain_inputs(data, rows);
        const Eigen::MatrixXd p_hat = hard_projection(pi, in);
        if (data.header.has_label("p")) {
            const Eigen::MatrixXd p_star = rows_of(data.label_block("p"), rows);
            const NmseStats g = nmse(p_hat, p_star, in.flexible());
            r.nmse_g = g.mean;
            r.std_g = g.std;
            r.label_violation = dc_violation_rate(p_star * grid.isf.transpose(), limits);
        }
        if (pred.count("vm") > 0) {
            ad::Tape tape;
            const ad::Var theta = dc_angles(tape.constant(p_hat), grid);
            const AcLineFlows s_hat = ac_flows(tape.constant(pred.at("vm")), theta, grid);
            r.feasibility_violation = ac_violation_rate(s_hat.from_to.value(), s_hat.to_from.value(), limits);
        } else {
            r.feasibility_violation = dc_violation_rate(p_hat * grid.isf.transpose(), limits);
        }
    }
    if (pred.count("vm") > 0 && data.header.has_label("vm")) {
        const NmseStats s = nmse(pred.at("vm"), rows_of(data.label_block("vm"), rows));
        r.has_v = true;
        r.nmse_v = s.mean;
        r.std_v = s.std;
    }
    if (pred.count("logits") > 0 && trained.info.contains("active_lines")) {
        const auto lines = trained.info["active_lines"].get<std::vector<int>>();
        const Eigen::MatrixXd all = rows_of(data.label_block(kBindingChannel), rows);
        Eigen::MatrixXd truth(all.rows(), static_cast<Eigen::Index>(lines.size()));
        for (std::size_t k = 0; k < lines.size(); ++k) truth.col(static_cast<Eigen::Index>(k)) = all.col(lines[k]);
        const Eigen::MatrixXd guess = (pred.at("logits").array() > 0.0).cast<double>().matrix();
        const ClassificationSummary c = classification_summary(truth, guess);
        r.has_classification = true;
        r.recall = c.macro_recall;
        r.f1 = c.macro_f1;
    }
    return r;
}

void check_dataset_matches(const DatasetFile& data, const GridLinAlg& grid)
{
    const DatasetHeader& h = data.header;
    if (h.n_buses != grid.n_buses || h.n_lines != grid.n_lines()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dataset has " + std::to_string(h.n_buses) + " buses / " + std::to_string(h.n_lines) +
                        " lines, grid has " + std::to_string(grid.n_buses) + " / " + std::to_string(grid.n_lines()));
    }
    if (h.metadata.contains("line_branch_rows")) {
        const auto rows = h.metadata["line_branch_rows"].get<std::vector<int>>();
        for (int k = 0; k < grid.n_lines(); ++k) {
            if (rows[k] != grid.lines[k].branch_row) {
                throw Error(ErrorCode::DimensionMismatch, "dataset was generated on a different topology");
            }
        }
    }
}

TrainResult train(const DatasetFile& data, const GridLinAlg& grid, const TrainConfig& config,
                  const TrainedModel* warm_start)
{
    validate(config);
    check_dataset_matches(data, grid);
    const auto t0 = std::chrono::steady_clock::now();

    TrainResult res;
    res.split = split_dataset(data.n_samples(), config.train_fraction, config.validation_fraction, config.seed);
    if (res.split.test.empty()) throw Error(ErrorCode::EmptyTestSet, "the test split is empty");

    TrainConfig cfg = config;
    if (cfg.fr_top_k > 0) cfg.loss.active_lines = top_binding_lines(binding_frequency(data, res.split.train), cfg.fr_top_k);

    if (warm_start != nullptr) {
        res.model = *warm_start;
        if (res.model.model->spec().n_buses != grid.n_buses) {
            throw Error(ErrorCode::ShapeMismatch, "warm-start model does not match the grid");
        }
    } else {
        ModelSpec spec;
        spec.kind = cfg.kind;
        spec.n_buses = grid.n_buses;
        spec.widths = cfg.widths;
        spec.outputs = {"pi"};
        if (data.header.has_label("vm")) spec.outputs.push_back("vm");
        res.model.scaler = fit_standardizer(data, res.split.train, cfg.features, spec.outputs);
        res.model.model = make_model(spec, grid, cfg.seed);
    }
    res.history = fit(res.model, data, grid, res.split.train, res.split.validation, cfg);
    res.report = evaluate(res.model, data, grid, res.split.test);
    res.report.epochs = res.history.epochs;
    res.report.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.model.info["train_config"] = to_json(cfg);
    res.model.info["epochs"] = res.history.epochs;
    res.model.info["best_epoch"] = res.history.best_epoch;
    res.model.info["n_samples"] = data.n_samples();
    return res;
}

}  // namespace gridflow
