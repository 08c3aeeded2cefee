#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "gridflow/error.hpp"
#include "gridflow/opf.hpp"
#include "gridflow/random.hpp"

namespace gridflow {

namespace {

// A single sample is abandoned after this many consecutive rejected draws.
constexpr int kMaxAttemptsPerSample = 25;

int resolve_threads(int requested)
{
    if (requested > 0) return requested;
    if (const char* env = std::getenv("GRIDFLOW_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

struct SampleResult {
    Eigen::RowVectorXd features;
    Eigen::RowVectorXd labels;
    int rejections = 0;
    bool ok = false;
};

Perturbation draw(std::mt19937_64& rng, int n, const SampleSpec& spec)
{
    Perturbation p;
    p.load_scale.resize(n);
    p.cost_a_scale.resize(n);
    p.cost_b_scale.resize(n);
    const auto [llo, lhi] = spec.load_scale_range;
    const auto [clo, chi] = spec.cost_scale_range;
    for (int i = 0; i < n; ++i) p.load_scale(i) = uniform(rng, llo, lhi);
    for (int i = 0; i < n; ++i) p.cost_a_scale(i) = uniform(rng, clo, chi);
    for (int i = 0; i < n; ++i) p.cost_b_scale(i) = uniform(rng, clo, chi);
    return p;
}

}  // namespace

DatasetFile generate_dataset(const GridCase& grid_case, const SampleSpec& spec)
{
    if (spec.n_samples < 0) throw Error(ErrorCode::BadConfig, "n_samples must be non-negative");
    for (const auto& r : {spec.load_scale_range, spec.cost_scale_range}) {
        if (!(r[0] > 0.0) || !(r[1] >= r[0])) throw Error(ErrorCode::BadConfig, "scale ranges must be positive");
    }

    const GridCase live = with_branches_out(grid_case, spec.outaged_branches);
    std::shared_ptr<const GridLinAlg> grid;
    try {
        grid = std::make_shared<const GridLinAlg>(build_linalg(live));
    } catch (const IslandError& e) {
        if (spec.outaged_branches.empty()) throw;
        throw IslandError(ErrorCode::WouldDisconnect, e.islands());
    }
    const int n = grid->n_buses;
    const int nl = grid->n_lines();

    const DcOpfSolution base = solve_dcopf(make_instance(live, grid, spec.cost_policy));
    if (base.status != OpfStatus::Optimal) {
        throw Error(ErrorCode::Infeasible, "base case is not solvable (" + to_string(base.status) + ")");
    }

    DatasetFile data;
    DatasetHeader& h = data.header;
    h.case_name = grid_case.name;
    h.n_buses = n;
    h.n_lines = nl;
    h.feature_names.assign(kNodeFeatures.begin(), kNodeFeatures.end());
    h.label_names = {"pi", "p", kBindingChannel};
    h.seed = spec.seed;

    const int d = h.n_features();
    std::vector<SampleResult> results(spec.n_samples);
    std::atomic<int> next{0};
    std::atomic<bool> abort{false};

    auto worker = [&] {
        for (int i = next++; i < spec.n_samples && !abort; i = next++) {
            SampleResult& out = results[i];
            for (int attempt = 0; attempt < kMaxAttemptsPerSample; ++attempt) {
                auto rng = keyed_rng(spec.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt));
                const Perturbation pert = draw(rng, n, spec);
                const NodalData nodal = make_nodal_data(live, grid, &pert, spec.cost_policy);
                const DcOpfSolution sol = solve_dcopf(nodal.instance);
                if (sol.status != OpfStatus::Optimal || sol.kkt_residual >= 1e-6) {
                    ++out.rejections;
                    continue;
                }
                const DcOpfInstance& inst = nodal.instance;
                out.features.resize(n * d);
                for (int b = 0; b < n; ++b) {
                    const double row[6] = {inst.p_max(b), inst.p_min(b), nodal.q_max(b),
                                           nodal.q_min(b), inst.a(b),     inst.b(b)};
                    for (int f = 0; f < d; ++f) out.features(b * d + f) = row[f];
                }
                out.labels.resize(2 * n + nl);
                out.labels.head(n) = sol.pi_star.transpose();
                out.labels.segment(n, n) = sol.p_star.transpose();
                const auto bind = binding_lines(sol.f_star, inst.f_max);
                for (int k = 0; k < nl; ++k) out.labels(2 * n + k) = bind[k] ? 1.0 : 0.0;
                out.ok = true;
                break;
            }
            if (!out.ok) abort = true;
        }
    };

    const int threads = std::min(resolve_threads(spec.threads), std::max(1, spec.n_samples));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    int rejections = 0;
    for (const auto& r : results) rejections += r.rejections;
    const int draws = spec.n_samples + rejections;
    if (abort || (draws > 0 && rejections > kMaxRejectionRate * draws)) {
        throw Error(ErrorCode::TooManyRejections,
                    std::to_string(rejections) + " of " + std::to_string(draws) + " draws were infeasible");
    }

    data.features.resize(spec.n_samples, n * d);
    data.labels.resize(spec.n_samples, h.label_width());
    for (int i = 0; i < spec.n_samples; ++i) {
        data.features.row(i) = results[i].features;
        data.labels.row(i) = results[i].labels;
    }

    std::vector<int> line_rows;
    for (const auto& line : grid->lines) line_rows.push_back(line.branch_row);
    h.metadata = {
        {"generator", "dcopf"},
        {"base_mva", grid_case.base_mva},
        {"load_scale_range", spec.load_scale_range},
        {"cost_scale_range", spec.cost_scale_range},
        {"quadratic_fill", spec.cost_policy.quadratic_fill},
        {"rejections", rejections},
        {"outaged_branches", spec.outaged_branches},
        {"line_branch_rows", line_rows},
    };
    return data;
}

}  // namespace gridflow
