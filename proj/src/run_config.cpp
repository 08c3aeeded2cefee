#include "gridflow/run_config.hpp"

#include <cstdio>
#include <set>

#include "gridflow/case_io.hpp"
#include "gridflow/error.hpp"

namespace gridflow {

namespace {

using nlohmann::json;

class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) throw Error(ErrorCode::BadConfig, where_ + " must be an object");
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::BadConfig, where_ + key + ": " + e.what());
        }
    }

    const json* sub(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const
    {
        for (const auto& item : j_.items()) {
            if (seen_.count(item.key()) == 0) throw Error(ErrorCode::BadConfig, "unknown key " + where_ + item.key());
        }
    }

    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::vector<int> one_based_to_rows(const std::vector<int>& numbers, const std::string& what)
{
    std::vector<int> rows;
    for (int b : numbers) {
        if (b < 1) throw Error(ErrorCode::BadConfig, what + ": branch numbers start at 1");
        rows.push_back(b - 1);
    }
    return rows;
}

std::vector<int> rows_to_one_based(const std::vector<int>& rows)
{
    std::vector<int> out;
    for (int r : rows) out.push_back(r + 1);
    return out;
}

std::filesystem::path resolve(const std::string& text, const std::filesystem::path& base)
{
    std::filesystem::path p(text);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

json settings_json(const RunConfig& c)
{
    const TrainConfig& t = c.train;
    std::vector<std::vector<int>> scenarios;
    for (const auto& s : c.transfer.scenarios) scenarios.push_back(rows_to_one_based(s));
    return {
        {"run_id", c.run_id},
        {"sample",
         {{"samples", c.sample.n_samples},
          {"load_scale_range", c.sample.load_scale_range},
          {"cost_scale_range", c.sample.cost_scale_range},
          {"seed", c.sample.seed},
          {"outaged_branches", rows_to_one_based(c.sample.outaged_branches)},
          {"quadratic_fill", c.sample.cost_policy.quadratic_fill},
          {"threads", c.sample.threads}}},
        {"train",
         {{"model", to_string(t.kind)},
          {"widths", t.widths},
          {"features", t.features},
          {"gamma_pi", t.loss.gamma_pi},
          {"gamma_v", t.loss.gamma_v},
          {"gamma_fr", t.loss.gamma_fr},
          {"gamma_p", t.loss.gamma_p},
          {"use_linf_pi", t.loss.use_linf_pi},
          {"linf_temperature", t.loss.linf_temperature},
          {"fr_mode", to_string(t.loss.fr_mode)},
          {"active_lines", t.loss.active_lines},
          {"fr_top_k", t.fr_top_k},
          {"sharpness", t.loss.sharpness},
          {"smooth_hinge", t.loss.smooth_hinge},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"min_delta", t.min_delta},
          {"train_fraction", t.train_fraction},
          {"validation_fraction", t.validation_fraction},
          {"seed", t.seed}}},
        {"congestion", {{"top_k", c.congestion_top_k}, {"max_pos_weight", c.congestion_max_pos_weight}}},
        {"transfer",
         {{"scenarios", scenarios},
          {"samples", c.transfer.samples},
          {"seed", c.transfer.seed},
          {"max_epochs", c.transfer.max_epochs},
          {"spectral_s", c.transfer.spectral_s},
          {"auto_scenarios", c.transfer.auto_scenarios},
          {"pair_pool", c.transfer.pair_pool}}},
        {"spectral", {{"s", c.spectral.s}, {"energy", c.spectral.energy}}},
    };
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir)
{
    RunConfig c;
    Section top(j, "");
    top.get("run_id", c.run_id);
    auto path_of = [&](const char* key, std::filesystem::path& out) {
        std::string text;
        top.get(key, text);
        if (!text.empty()) out = resolve(text, base_dir);
    };
    path_of("case", c.case_path);
    path_of("dataset", c.dataset_path);
    path_of("model", c.model_path);
    path_of("out_dir", c.out_dir);

    if (const json* v = top.sub("sample")) {
        Section s(*v, "sample.");
        s.get("samples", c.sample.n_samples);
        s.get("load_scale_range", c.sample.load_scale_range);
        s.get("cost_scale_range", c.sample.cost_scale_range);
        s.get("seed", c.sample.seed);
        std::vector<int> branches;
        s.get("outaged_branches", branches);
        c.sample.outaged_branches = one_based_to_rows(branches, "sample.outaged_branches");
        s.get("quadratic_fill", c.sample.cost_policy.quadratic_fill);
        s.get("threads", c.sample.threads);
        s.finish();
    }
    if (const json* v = top.sub("train")) {
        Section s(*v, "train.");
        TrainConfig& t = c.train;
        std::string kind = to_string(t.kind);
        s.get("model", kind);
        t.kind = parse_model_kind(kind);
        s.get("widths", t.widths);
        s.get("features", t.features);
        s.get("gamma_pi", t.loss.gamma_pi);
        s.get("gamma_v", t.loss.gamma_v);
        s.get("gamma_fr", t.loss.gamma_fr);
        s.get("gamma_p", t.loss.gamma_p);
        s.get("use_linf_pi", t.loss.use_linf_pi);
        s.get("linf_temperature", t.loss.linf_temperature);
        std::string mode = to_string(t.loss.fr_mode);
        s.get("fr_mode", mode);
        t.loss.fr_mode = parse_fr_mode(mode);
        s.get("active_lines", t.loss.active_lines);
        s.get("fr_top_k", t.fr_top_k);
        s.get("sharpness", t.loss.sharpness);
        s.get("smooth_hinge", t.loss.smooth_hinge);
        s.get("lr", t.adam.lr);
        s.get("beta1", t.adam.beta1);
        s.get("beta2", t.adam.beta2);
        s.get("eps", t.adam.eps);
        s.get("batch_size", t.batch_size);
        s.get("max_epochs", t.max_epochs);
        s.get("patience", t.patience);
        s.get("min_delta", t.min_delta);
        s.get("train_fraction", t.train_fraction);
        s.get("validation_fraction", t.validation_fraction);
        s.get("seed", t.seed);
        s.finish();
    }
    if (const json* v = top.sub("congestion")) {
        Section s(*v, "congestion.");
        s.get("top_k", c.congestion_top_k);
        s.get("max_pos_weight", c.congestion_max_pos_weight);
        s.finish();
    }
    if (const json* v = top.sub("transfer")) {
        Section s(*v, "transfer.");
        std::vector<std::vector<int>> scenarios;
        s.get("scenarios", scenarios);
        for (const auto& sc : scenarios) c.transfer.scenarios.push_back(one_based_to_rows(sc, "transfer.scenarios"));
        s.get("samples", c.transfer.samples);
        s.get("seed", c.transfer.seed);
        s.get("max_epochs", c.transfer.max_epochs);
        s.get("spectral_s", c.transfer.spectral_s);
        s.get("auto_scenarios", c.transfer.auto_scenarios);
        s.get("pair_pool", c.transfer.pair_pool);
        s.finish();
    }
    if (const json* v = top.sub("spectral")) {
        Section s(*v, "spectral.");
        s.get("s", c.spectral.s);
        s.get("energy", c.spectral.energy);
        s.finish();
    }
    top.finish();

    validate(c.train);
    if (c.sample.n_samples < 0 || c.transfer.samples < 0 || c.transfer.max_epochs < 0 || c.spectral.s < 0 ||
        c.transfer.spectral_s < 0 || c.transfer.pair_pool < 2) {
        throw Error(ErrorCode::BadConfig, "negative count in config");
    }
    if (!(c.spectral.energy > 0.0 && c.spectral.energy <= 1.0)) {
        throw Error(ErrorCode::BadConfig, "spectral.energy must lie in (0, 1]");
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    require_file(path, "config");
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadConfig, "config is not valid JSON: " + std::string(e.what()));
    }
    return parse_run_config(j, path.parent_path());
}

json to_json(const RunConfig& c)
{
    json j = settings_json(c);
    if (!c.case_path.empty()) j["case"] = c.case_path.string();
    if (!c.dataset_path.empty()) j["dataset"] = c.dataset_path.string();
    if (!c.model_path.empty()) j["model"] = c.model_path.string();
    j["out_dir"] = c.out_dir.string();
    return j;
}

std::string config_hash(const RunConfig& c)
{
    const std::string text = settings_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void require_file(const std::filesystem::path& path, const std::string& what)
{
    if (path.empty()) throw Error(ErrorCode::BadConfig, "no " + what + " path given");
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::BadConfig, what + " file does not exist: " + path.string());
    }
}

std::vector<int> parse_branch_list(const std::string& text)
{
    std::vector<int> rows;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        std::size_t used = 0;
        int value = 0;
        try {
            value = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (item.empty() || used != item.size() || value < 1) {
            throw Error(ErrorCode::BadConfig, "branch list must hold positive integers: " + text);
        }
        rows.push_back(value - 1);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return rows;
}

CongestionConfig congestion_config(const RunConfig& c)
{
    CongestionConfig cc;
    cc.train = c.train;
    cc.top_k = c.congestion_top_k;
    cc.max_pos_weight = c.congestion_max_pos_weight;
    return cc;
}

}  // namespace gridflow
