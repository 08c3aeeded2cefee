#include "gridflow/model_io.hpp"

#include "gridflow/error.hpp"

namespace gridflow {

TrainedModel::TrainedModel(const TrainedModel& other)
    : model(other.model ? other.model->clone() : nullptr), scaler(other.scaler), info(other.info)
{
}

TrainedModel& TrainedModel::operator=(const TrainedModel& other)
{
    if (this != &other) {
        model = other.model ? other.model->clone() : nullptr;
        scaler = other.scaler;
        info = other.info;
    }
    return *this;
}

Checkpoint to_checkpoint(const TrainedModel& trained)
{
    if (!trained.model) throw Error(ErrorCode::ShapeMismatch, "no model to save");
    const ModelSpec& spec = trained.model->spec();
    Checkpoint ckpt;
    nlohmann::json& m = ckpt.manifest;
    m["model_format"] = kModelFormatVersion;
    m["kind"] = to_string(spec.kind);
    m["n_buses"] = spec.n_buses;
    m["widths"] = spec.widths;
    m["outputs"] = spec.outputs;
    m["n_logits"] = spec.n_logits;
    if (const GnnModel* gnn = trained.gnn()) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [i, j] : gnn->mask().entries()) entries.push_back({i, j});
        m["mask"] = entries;
    }
    m["features"] = trained.scaler.feature_names;
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& [ch, mean] : trained.scaler.label_mean) labels.push_back(ch);
    m["label_channels"] = labels;
    m["info"] = trained.info;

    for (const auto& p : trained.model->parameters()) ckpt.add("param/" + p.name, p.value);
    ckpt.add("scaler/feature_mean", trained.scaler.feature_mean);
    ckpt.add("scaler/feature_std", trained.scaler.feature_std);
    for (const auto& [ch, mean] : trained.scaler.label_mean) {
        Eigen::MatrixXd ms(1, 2);
        ms << mean, trained.scaler.label_std.at(ch);
        ckpt.add("scaler/label/" + ch, ms);
    }
    return ckpt;
}

TrainedModel from_checkpoint(const Checkpoint& ckpt)
{
    const nlohmann::json& m = ckpt.manifest;
    if (!m.contains("model_format") || m["model_format"] != kModelFormatVersion) {
        throw Error(ErrorCode::VersionMismatch, "checkpoint does not hold a version " +
                                                    std::to_string(kModelFormatVersion) + " model");
    }
    TrainedModel out;
    try {
        ModelSpec spec;
        spec.kind = parse_model_kind(m.at("kind").get<std::string>());
        spec.n_buses = m.at("n_buses").get<int>();
        spec.widths = m.at("widths").get<std::vector<int>>();
        spec.outputs = m.at("outputs").get<std::vector<std::string>>();
        spec.n_logits = m.at("n_logits").get<int>();
        validate(spec);
        if (spec.kind == ModelKind::Gnn) {
            std::vector<std::pair<int, int>> edges;
            for (const auto& e : m.at("mask")) {
                const int i = e.at(0).get<int>();
                const int j = e.at(1).get<int>();
                if (i < 0 || j < 0 || i >= spec.n_buses || j >= spec.n_buses) {
                    throw Error(ErrorCode::ShapeMismatch, "mask entry out of range");
                }
                if (i < j) edges.emplace_back(i, j);
            }
            out.model = std::make_unique<GnnModel>(spec, GraphMask(spec.n_buses, edges), 0);
        } else {
            out.model = std::make_unique<FcnnModel>(spec, 0);
        }
        out.scaler.feature_names = m.at("features").get<std::vector<std::string>>();
        out.info = m.value("info", nlohmann::json::object());
        for (const auto& ch : m.at("label_channels")) {
            const Eigen::MatrixXd& ms = ckpt.get("scaler/label/" + ch.get<std::string>());
            if (ms.rows() != 1 || ms.cols() != 2) throw Error(ErrorCode::ShapeMismatch, "label scaler shape");
            out.scaler.label_mean[ch] = ms(0, 0);
            out.scaler.label_std[ch] = ms(0, 1);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ShapeMismatch, std::string("bad model manifest: ") + e.what());
    }
    for (auto& p : out.model->parameters()) {
        const Eigen::MatrixXd& v = ckpt.get("param/" + p.name);
        if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
            throw Error(ErrorCode::ShapeMismatch, "parameter " + p.name + " has the wrong shape");
        }
        p.value = v;
    }
    const Eigen::MatrixXd& mean = ckpt.get("scaler/feature_mean");
    const Eigen::MatrixXd& sd = ckpt.get("scaler/feature_std");
    const auto d = static_cast<Eigen::Index>(out.scaler.feature_names.size());
    if (mean.rows() != 1 || sd.rows() != 1 || mean.cols() != d || sd.cols() != d ||
        d != out.model->spec().widths.front()) {
        throw Error(ErrorCode::ShapeMismatch, "feature scaler does not match the model input width");
    }
    out.scaler.feature_mean = mean;
    out.scaler.feature_std = sd;
    return out;
}

void save_model(const std::filesystem::path& path, const TrainedModel& trained)
{
    write_checkpoint(path, to_checkpoint(trained));
}

TrainedModel load_model(const std::filesystem::path& path)
{
    return from_checkpoint(read_checkpoint(path));
}

}  // namespace gridflow
