#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridflow/case_io.hpp"
#include "gridflow/congestion.hpp"
#include "gridflow/error.hpp"
#include "gridflow/grid_model.hpp"
#include "gridflow/model_io.hpp"
#include "gridflow/opf.hpp"
#include "gridflow/run_config.hpp"
#include "gridflow/spectral.hpp"
#include "gridflow/training.hpp"
#include "gridflow/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridflow;

namespace {

// Flag values; unset optionals leave the config file value alone.
struct Flags {
    std::string config;
    std::optional<std::string> run_id;
    std::optional<std::string> out_dir;
    std::optional<std::string> case_path;
    std::optional<std::string> data;
    std::optional<std::string> model;
    std::optional<std::string> out;
    std::optional<int> samples;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> outage;
    std::optional<int> threads;
    std::optional<std::string> arch;
    std::optional<std::string> fr;
    std::optional<double> gamma_fr;
    std::optional<int> fr_top_k;
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<int> batch_size;
    std::optional<int> top_k;
    std::optional<int> s;
    std::optional<double> energy;
    bool all = false;
    bool timing = false;
};

fs::path abs_path(const std::string& p)
{
    return fs::absolute(fs::path(p)).lexically_normal();
}

RunConfig effective_config(const Flags& f, const std::string& command)
{
    RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (f.run_id) c.run_id = *f.run_id;
    if (f.out_dir) c.out_dir = abs_path(*f.out_dir);
    if (f.case_path) c.case_path = abs_path(*f.case_path);
    if (f.data) c.dataset_path = abs_path(*f.data);
    if (f.model) c.model_path = abs_path(*f.model);
    if (f.arch) c.train.kind = parse_model_kind(*f.arch);
    if (f.fr) c.train.loss.fr_mode = parse_fr_mode(*f.fr);
    if (f.gamma_fr) c.train.loss.gamma_fr = *f.gamma_fr;
    if (f.fr_top_k) c.train.fr_top_k = *f.fr_top_k;
    if (f.lr) c.train.adam.lr = *f.lr;
    if (f.batch_size) c.train.batch_size = *f.batch_size;
    if (f.top_k) c.congestion_top_k = *f.top_k;
    if (f.s) c.spectral.s = *f.s;
    if (f.energy) c.spectral.energy = *f.energy;
    if (command == "gen-data") {
        if (f.samples) c.sample.n_samples = *f.samples;
        if (f.seed) c.sample.seed = *f.seed;
        if (f.threads) c.sample.threads = *f.threads;
        if (f.outage) c.sample.outaged_branches = parse_branch_list(*f.outage);
    } else if (command == "transfer") {
        if (f.samples) c.transfer.samples = *f.samples;
        if (f.seed) c.transfer.seed = *f.seed;
        if (f.epochs) c.transfer.max_epochs = *f.epochs;
        if (f.threads) c.sample.threads = *f.threads;
        if (f.outage) c.transfer.scenarios = {parse_branch_list(*f.outage)};
    } else {
        if (f.seed) c.train.seed = *f.seed;
        if (f.epochs) c.train.max_epochs = *f.epochs;
        if (f.outage) c.sample.outaged_branches = parse_branch_list(*f.outage);
    }
    validate(c.train);
    return c;
}

fs::path output_path(const RunConfig& c, const std::string& suffix)
{
    return c.out_dir / (c.run_id + suffix);
}

void write_json_report(const RunConfig& c, const std::string& kind, const json& body)
{
    json out = {{"config_hash", config_hash(c)}, {"run_id", c.run_id}, {"command", kind}, {"report", body}};
    fs::create_directories(c.out_dir);
    write_file_atomic(output_path(c, "." + kind + ".json"), out.dump(2) + "\n");
}

void write_csv_report(const RunConfig& c, const std::string& kind, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows)
{
    std::ostringstream os;
    os << "# config_hash=" << config_hash(c) << " run_id=" << c.run_id << "\n";
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) os << (k ? "," : "") << cells[k];
        os << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    fs::create_directories(c.out_dir);
    write_file_atomic(output_path(c, "." + kind + ".csv"), os.str());
}

std::string num(double v)
{
    return format_double(v);
}

std::string fixed(double v, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::vector<std::string> report_columns()
{
    return {"n_samples", "nmse_pi", "std_pi", "nmse_v", "std_v", "nmse_g", "std_g", "feasibility_violation",
            "label_violation", "recall", "f1", "epochs"};
}

std::vector<std::string> report_cells(const EvalReport& r)
{
    return {std::to_string(r.n_samples), num(r.nmse_pi),  num(r.std_pi), r.has_v ? num(r.nmse_v) : "",
            r.has_v ? num(r.std_v) : "", num(r.nmse_g),   num(r.std_g),  num(r.feasibility_violation),
            num(r.label_violation),      r.has_classification ? num(r.recall) : "",
            r.has_classification ? num(r.f1) : "", std::to_string(r.epochs)};
}

void print_report(const std::string& title, const EvalReport& r)
{
    std::printf("%s (%d test samples)\n", title.c_str(), r.n_samples);
    std::printf("  nmse_pi   %-12s std %s\n", fixed(r.nmse_pi).c_str(), fixed(r.std_pi).c_str());
    if (r.has_v) std::printf("  nmse_v    %-12s std %s\n", fixed(r.nmse_v).c_str(), fixed(r.std_v).c_str());
    std::printf("  nmse_g    %-12s std %s\n", fixed(r.nmse_g).c_str(), fixed(r.std_g).c_str());
    std::printf("  violation %-12s labels %s\n", fixed(r.feasibility_violation).c_str(),
                fixed(r.label_violation).c_str());
    if (r.has_classification) std::printf("  recall    %-12s f1 %s\n", fixed(r.recall).c_str(), fixed(r.f1).c_str());
    if (r.epochs > 0) std::printf("  epochs    %d\n", r.epochs);
}

GridCase load_case(const RunConfig& c)
{
    require_file(c.case_path, "case");
    return load_matpower_case(c.case_path);
}

DatasetFile load_data(const RunConfig& c)
{
    require_file(c.dataset_path, "dataset");
    return read_dataset(c.dataset_path);
}

// Grid the dataset was generated on: the case minus its recorded outages.
GridLinAlg grid_for(const GridCase& grid_case, const DatasetFile& data)
{
    std::vector<int> rows;
    if (data.header.metadata.contains("outaged_branches")) {
        rows = data.header.metadata["outaged_branches"].get<std::vector<int>>();
    }
    return build_linalg(with_branches_out(grid_case, rows));
}

int line_of_branch(const GridLinAlg& grid, int branch_row)
{
    for (int k = 0; k < grid.n_lines(); ++k) {
        if (grid.lines[k].branch_row == branch_row) return k;
    }
    throw Error(ErrorCode::BadConfig, "branch " + std::to_string(branch_row + 1) + " is not in service");
}

fs::path default_model_path(const RunConfig& c)
{
    return c.model_path.empty() ? output_path(c, ".model") : c.model_path;
}

std::string join(const std::vector<int>& v, const char* sep = " ")
{
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? sep : "") + std::to_string(v[k]);
    return s;
}

std::vector<int> one_based(std::vector<int> rows)
{
    for (int& r : rows) ++r;
    return rows;
}

int cmd_gen_data(const Flags& f)
{
    const RunConfig c = effective_config(f, "gen-data");
    const GridCase grid_case = load_case(c);
    DatasetFile d = generate_dataset(grid_case, c.sample);
    d.header.metadata["config_hash"] = config_hash(c);
    const fs::path out = f.out ? abs_path(*f.out)
                               : (c.dataset_path.empty() ? output_path(c, ".data.csv") : c.dataset_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_dataset(out, d);
    std::printf("wrote %d samples (%s rejected draws) to %s\n", d.n_samples(),
                d.header.metadata["rejections"].dump().c_str(), out.string().c_str());
    return 0;
}

int cmd_train(const Flags& f)
{
    const RunConfig c = effective_config(f, "train");
    const GridCase grid_case = load_case(c);
    const DatasetFile d = load_data(c);
    const GridLinAlg grid = grid_for(grid_case, d);
    TrainResult r = train(d, grid, c.train);
    r.model.info["config_hash"] = config_hash(c);
    const fs::path model_out = default_model_path(c);
    if (model_out.has_parent_path()) fs::create_directories(model_out.parent_path());
    save_model(model_out, r.model);

    json body = to_json(r.report, f.timing);
    body["model"] = to_string(c.train.kind);
    body["parameters"] = r.model.model->parameter_count();
    body["best_epoch"] = r.history.best_epoch;
    write_json_report(c, "train", body);
    write_csv_report(c, "train", report_columns(), {report_cells(r.report)});
    print_report(to_string(c.train.kind) + " trained, best epoch " + std::to_string(r.history.best_epoch), r.report);
    std::printf("model written to %s\n", model_out.string().c_str());
    return 0;
}

int cmd_eval(const Flags& f)
{
    const RunConfig c = effective_config(f, "eval");
    const GridCase grid_case = load_case(c);
    const DatasetFile d = load_data(c);
    require_file(c.model_path, "model");
    TrainedModel m = load_model(c.model_path);
    const GridLinAlg grid = grid_for(grid_case, d);
    std::vector<int> rows;
    if (f.all || !m.info.contains("train_config")) {
        for (int i = 0; i < d.n_samples(); ++i) rows.push_back(i);
    } else {
        const json& tc = m.info["train_config"];
        rows = split_dataset(d.n_samples(), tc.at("train_fraction").get<double>(),
                             tc.at("validation_fraction").get<double>(), tc.at("seed").get<std::uint64_t>())
                   .test;
    }
    const EvalReport r = evaluate(m, d, grid, rows);
    write_json_report(c, "eval", to_json(r, false));
    write_csv_report(c, "eval", report_columns(), {report_cells(r)});
    print_report("evaluation", r);
    return 0;
}

int cmd_congestion(const Flags& f)
{
    const RunConfig c = effective_config(f, "congestion");
    const GridCase grid_case = load_case(c);
    const DatasetFile d = load_data(c);
    const GridLinAlg grid = grid_for(grid_case, d);
    CongestionResult r = congestion_classify(d, grid, congestion_config(c));
    r.model.info["config_hash"] = config_hash(c);
    const fs::path model_out = default_model_path(c);
    if (model_out.has_parent_path()) fs::create_directories(model_out.parent_path());
    save_model(model_out, r.model);

    json lines = json::array();
    std::vector<std::vector<std::string>> rows;
    std::printf("congestion classifier, %d test samples, %d epochs\n", r.report.n_samples, r.history.epochs);
    std::printf("  %-8s %-8s %-10s %-8s %-8s\n", "branch", "freq", "recall", "f1", "tp/fn/fp");
    for (std::size_t k = 0; k < r.active_lines.size(); ++k) {
        const BinaryMetrics& m = r.summary.per_line[k];
        const int branch = grid.lines[r.active_lines[k]].branch_row + 1;
        const bool skipped = std::find(r.summary.skipped.begin(), r.summary.skipped.end(), static_cast<int>(k)) !=
                             r.summary.skipped.end();
        json entry = {{"branch", branch}, {"line", r.active_lines[k]}, {"train_frequency", r.train_frequency(k)},
                      {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
        if (!skipped) {
            entry["recall"] = m.recall;
            entry["f1"] = m.f1;
        }
        lines.push_back(entry);
        rows.push_back({std::to_string(branch), num(r.train_frequency(k)), skipped ? "" : num(m.recall),
                        skipped ? "" : num(m.f1), std::to_string(m.tp), std::to_string(m.fp), std::to_string(m.fn),
                        std::to_string(m.tn)});
        std::printf("  %-8d %-8s %-10s %-8s %d/%d/%d\n", branch, fixed(r.train_frequency(k), 3).c_str(),
                    skipped ? "-" : fixed(m.recall).c_str(), skipped ? "-" : fixed(m.f1).c_str(), m.tp, m.fn, m.fp);
    }
    std::printf("  macro recall %s, macro f1 %s\n", fixed(r.summary.macro_recall).c_str(),
                fixed(r.summary.macro_f1).c_str());
    json body = to_json(r.report, f.timing);
    body["lines"] = lines;
    write_json_report(c, "congestion", body);
    write_csv_report(c, "congestion", {"branch", "train_frequency", "recall", "f1", "tp", "fp", "fn", "tn"}, rows);
    return 0;
}

int cmd_transfer(const Flags& f)
{
    const RunConfig c = effective_config(f, "transfer");
    const GridCase grid_case = load_case(c);
    require_file(c.model_path, "model");
    const TrainedModel model = load_model(c.model_path);
    const GridLinAlg grid = build_linalg(grid_case);
    if (model.model->spec().n_buses != grid.n_buses) {
        throw Error(ErrorCode::DimensionMismatch, "model and case bus counts differ");
    }
    const int original = model.info.value("n_samples", 0);
    const int samples = c.transfer.samples > 0 ? c.transfer.samples : original / 2;
    if (samples <= 0) throw Error(ErrorCode::BadConfig, "transfer needs --samples (the model records no sample count)");

    std::vector<std::vector<int>> scenarios = c.transfer.scenarios;
    const bool automatic = scenarios.empty();
    if (automatic) {
        const DatasetFile d = load_data(c);
        const json tc = model.info.value("train_config", json::object());
        const Split split = split_dataset(d.n_samples(), tc.value("train_fraction", c.train.train_fraction),
                                          tc.value("validation_fraction", c.train.validation_fraction),
                                          tc.value("seed", c.train.seed));
        for (const auto& pair : candidate_outage_pairs(grid, binding_frequency(d, split.train), c.transfer.pair_pool)) {
            scenarios.push_back({grid.lines[pair[0]].branch_row, grid.lines[pair[1]].branch_row});
        }
    }

    TransferConfig tc = default_transfer_config();
    tc.train = c.train;
    tc.train.max_epochs = c.transfer.max_epochs;
    tc.spectral_s = c.transfer.spectral_s;
    tc.original_samples = original;

    json reports = json::array();
    std::vector<std::vector<std::string>> rows;
    int done = 0;
    for (const auto& branches : scenarios) {
        if (automatic && done >= c.transfer.auto_scenarios) break;
        std::vector<int> lines;
        for (int b : branches) lines.push_back(line_of_branch(grid, b));
        SampleSpec spec = c.sample;
        spec.n_samples = samples;
        spec.seed = c.transfer.seed;
        spec.outaged_branches = branches;
        DatasetFile nd;
        try {
            nd = generate_dataset(grid_case, spec);
        } catch (const Error& e) {
            if (!automatic) throw;
            std::printf("skipping branches %s: %s\n", join(one_based(branches)).c_str(), e.what());
            continue;
        }
        tc.scenario_id = "branches-" + join(one_based(branches), "-");
        const TransferResult r = topology_transfer(model, grid, lines, nd, tc);
        ++done;
        const TransferReport& t = r.report;
        reports.push_back(to_json(t, f.timing));
        std::vector<std::string> row = {t.scenario_id, num(t.pre_trained.nmse_pi), num(t.re_trained.nmse_pi),
                                        num(t.pre_trained.feasibility_violation),
                                        num(t.re_trained.feasibility_violation), std::to_string(t.retrain_epochs),
                                        num(t.delta_h)};
        row.push_back(t.spectral ? num(t.spectral->distance_fro) : "");
        row.push_back(t.spectral ? num(t.spectral->bound_fro.bound()) : "");
        rows.push_back(row);
        std::printf("%s: nmse_pi %s (%s), violation %s (%s), %d epochs, delta_H %s", t.scenario_id.c_str(),
                    fixed(t.pre_trained.nmse_pi).c_str(), fixed(t.re_trained.nmse_pi).c_str(),
                    fixed(t.pre_trained.feasibility_violation).c_str(),
                    fixed(t.re_trained.feasibility_violation).c_str(), t.retrain_epochs, fixed(t.delta_h).c_str());
        if (t.spectral) {
            std::printf(", subspace distance %s <= bound %s", fixed(t.spectral->distance_fro).c_str(),
                        fixed(t.spectral->bound_fro.bound()).c_str());
        }
        std::printf("\n");
    }
    if (done == 0) throw Error(ErrorCode::Infeasible, "no outage scenario could be sampled");
    write_json_report(c, "transfer", {{"samples", samples}, {"scenarios", reports}});
    write_csv_report(c, "transfer",
                     {"scenario", "pre_nmse_pi", "re_nmse_pi", "pre_violation", "re_violation", "retrain_epochs",
                      "delta_h", "subspace_distance_fro", "dk_bound_fro"},
                     rows);
    std::printf("values in parentheses are after warm-start retraining on %d samples\n", samples);
    return 0;
}

int cmd_spectral(const Flags& f)
{
    const RunConfig c = effective_config(f, "spectral");
    const GridCase grid_case = load_case(c);
    const GridLinAlg grid = build_linalg(grid_case);
    const EigenBasis basis = eigendecompose_spd(grid.b_inv);
    SubspaceChoice choice;
    if (c.spectral.s > 0) {
        choice.s = std::min(c.spectral.s, basis.size());
        choice.energy = spectral_energy_fraction(basis, choice.s);
    } else {
        choice = choose_subspace_dimension(basis, c.spectral.energy);
    }
    const SeparationConstants sep = separation_constants(basis, choice.s);
    std::printf("%s: %d buses, %d lines, s = %d (energy %s), delta %s, delta' %s\n", grid_case.name.c_str(),
                grid.n_buses, grid.n_lines(), choice.s, fixed(choice.energy).c_str(), fixed(sep.delta).c_str(),
                fixed(sep.delta_prime).c_str());
    if (!choice.note.empty()) std::printf("  %s\n", choice.note.c_str());

    std::vector<std::vector<int>> outages;
    if (!c.sample.outaged_branches.empty()) {
        std::vector<int> lines;
        for (int b : c.sample.outaged_branches) lines.push_back(line_of_branch(grid, b));
        outages.push_back(lines);
    } else {
        for (int k = 0; k < grid.n_lines(); ++k) {
            if (islands_without(grid, {k}).size() == 1) outages.push_back({k});
        }
    }
    json scenarios = json::array();
    std::vector<std::vector<std::string>> rows;
    int holds = 0;
    for (const auto& lines : outages) {
        const SpectralScenario sc = analyze_outage(grid, basis, lines, choice.s);
        std::vector<int> branches;
        for (int l : lines) branches.push_back(grid.lines[l].branch_row + 1);
        const bool ok = sc.distance_fro <= sc.bound_fro.bound() && sc.distance_l2 <= sc.bound_l2.bound();
        holds += ok ? 1 : 0;
        scenarios.push_back({{"branches", branches},
                             {"distance_fro", sc.distance_fro},
                             {"distance_l2", sc.distance_l2},
                             {"bound_fro", sc.bound_fro.bound()},
                             {"bound_l2", sc.bound_l2.bound()},
                             {"perturbation_fro", sc.delta_fro},
                             {"perturbation_l2", sc.delta_l2}});
        rows.push_back({join(branches, "-"), num(sc.distance_fro), num(sc.bound_fro.bound()), num(sc.distance_l2),
                        num(sc.bound_l2.bound())});
    }
    if (outages.size() == 1) {
        const auto& s = scenarios[0];
        std::printf("  branches %s: distance %s (fro) %s (l2), bound %s (fro) %s (l2)\n",
                    join(s["branches"].get<std::vector<int>>()).c_str(), fixed(s["distance_fro"]).c_str(),
                    fixed(s["distance_l2"]).c_str(), fixed(s["bound_fro"]).c_str(), fixed(s["bound_l2"]).c_str());
    }
    std::printf("  bound holds on %d of %zu outages\n", holds, outages.size());
    write_json_report(c, "spectral",
                      {{"s", choice.s},
                       {"energy", choice.energy},
                       {"delta", sep.delta},
                       {"delta_prime", sep.delta_prime},
                       {"outages", scenarios}});
    write_csv_report(c, "spectral", {"branches", "distance_fro", "bound_fro", "distance_l2", "bound_l2"}, rows);
    return 0;
}

void add_common(CLI::App* sub, Flags& f)
{
    sub->add_option("--config", f.config, "JSON run configuration; flags override its values")->check(CLI::ExistingFile);
    sub->add_option("--run-id", f.run_id, "Name used for output files");
    sub->add_option("--out-dir", f.out_dir, "Directory for reports and default outputs");
    sub->add_option("--case", f.case_path, "MATPOWER case file");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"gridflow: graph neural network price prediction for dc optimal power flow"};
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("gen-data", "Sample dc-OPF instances and write a dataset");
    add_common(gen, f);
    gen->add_option("--samples", f.samples, "Number of accepted samples");
    gen->add_option("--seed", f.seed, "Sampling seed");
    gen->add_option("--out", f.out, "Dataset file to write");
    gen->add_option("--outage", f.outage, "Comma-separated branch numbers (1-based) taken out of service");
    gen->add_option("--threads", f.threads, "Worker threads (0 reads GRIDFLOW_THREADS)");

    auto* tr = app.add_subcommand("train", "Train a model and report on the held-out test split");
    add_common(tr, f);
    tr->add_option("--data", f.data, "Dataset file");
    tr->add_option("--model", f.model, "Model file to write");
    tr->add_option("--arch", f.arch, "gnn or fcnn");
    tr->add_option("--fr", f.fr, "Feasibility penalty: none, dc or ac");
    tr->add_option("--gamma-fr", f.gamma_fr, "Feasibility penalty weight");
    tr->add_option("--fr-top-k", f.fr_top_k, "Penalize only the k most frequently binding lines (0: all)");
    tr->add_option("--epochs", f.epochs, "Maximum epochs");
    tr->add_option("--lr", f.lr, "Adam learning rate");
    tr->add_option("--batch-size", f.batch_size, "Mini-batch size");
    tr->add_option("--seed", f.seed, "Split, initialization and shuffling seed");
    tr->add_flag("--timing", f.timing, "Include wall-clock time in the report");

    auto* ev = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
    add_common(ev, f);
    ev->add_option("--data", f.data, "Dataset file");
    ev->add_option("--model", f.model, "Model file");
    ev->add_flag("--all", f.all, "Use every sample instead of the model's test split");

    auto* cg = app.add_subcommand("congestion", "Train the binding-line classifier");
    add_common(cg, f);
    cg->add_option("--data", f.data, "Dataset file");
    cg->add_option("--model", f.model, "Model file to write");
    cg->add_option("--top-k", f.top_k, "Number of most frequently binding lines to classify");
    cg->add_option("--epochs", f.epochs, "Maximum epochs");
    cg->add_option("--lr", f.lr, "Adam learning rate");
    cg->add_option("--seed", f.seed, "Split, initialization and shuffling seed");
    cg->add_flag("--timing", f.timing, "Include wall-clock time in the report");

    auto* tf = app.add_subcommand("transfer", "Adapt a trained GNN to line outages");
    add_common(tf, f);
    tf->add_option("--model", f.model, "Trained model file");
    tf->add_option("--data", f.data, "Original dataset, used to pick scenarios when none are given");
    tf->add_option("--outage", f.outage, "Comma-separated branch numbers (1-based) of one scenario");
    tf->add_option("--samples", f.samples, "Retraining samples per scenario (default: half the original)");
    tf->add_option("--seed", f.seed, "Seed of the post-outage samples");
    tf->add_option("--epochs", f.epochs, "Maximum retraining epochs");
    tf->add_option("--threads", f.threads, "Worker threads for sampling");
    tf->add_flag("--timing", f.timing, "Include wall-clock time in the report");

    auto* sp = app.add_subcommand("spectral", "Eigenspace perturbation of B^-1 under line outages");
    add_common(sp, f);
    sp->add_option("--outage", f.outage, "Comma-separated branch numbers (1-based); default: every non-bridge line");
    sp->add_option("--s", f.s, "Leading eigenvectors compared (0: energy rule)");
    sp->add_option("--energy", f.energy, "Energy fraction for choosing s");

    auto* ver = app.add_subcommand("version", "Print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (ver->parsed()) {
            std::printf("gridflow %s\n", GRIDFLOW_VERSION);
            return 0;
        }
        if (gen->parsed()) return cmd_gen_data(f);
        if (tr->parsed()) return cmd_train(f);
        if (ev->parsed()) return cmd_eval(f);
        if (cg->parsed()) return cmd_congestion(f);
        if (tf->parsed()) return cmd_transfer(f);
        if (sp->parsed()) return cmd_spectral(f);
        throw Error(ErrorCode::UnknownSubcommand, "no subcommand given");
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.code() == ErrorCode::BadConfig || e.code() == ErrorCode::UnknownSubcommand ? 1 : 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
