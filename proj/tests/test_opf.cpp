#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gridflow/error.hpp"
#include "gridflow/opf.hpp"
#include "gridflow/random.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gridflow;
using testutil::brute_force;
using testutil::Oracle;

namespace {

std::shared_ptr<const GridLinAlg> shared_grid(const GridCase& c)
{
    return std::make_shared<const GridLinAlg>(build_linalg(c));
}

DcOpfInstance two_bus_instance(double f_max)
{
    GridCase c = testutil::fixture_case("two_bus");
    DcOpfInstance inst = make_instance(c, shared_grid(c));
    inst.f_max(0) = f_max;
    return inst;
}

void check_solution_invariants(const DcOpfInstance& inst, const DcOpfSolution& sol)
{
    REQUIRE(sol.status == OpfStatus::Optimal);
    CHECK(std::abs(sol.p_star.sum()) < 1e-8);
    CHECK(((sol.p_star - inst.p_max).array() <= 1e-6).all());
    CHECK(((inst.p_min - sol.p_star).array() <= 1e-6).all());
    CHECK(((sol.f_star.cwiseAbs() - inst.f_max).array() <= 1e-6).all());
    CHECK(sol.mu_bar.minCoeff() >= 0.0);
    CHECK(sol.mu_under.minCoeff() >= 0.0);
    CHECK((sol.mu_bar.array() * (inst.f_max - sol.f_star).array()).abs().maxCoeff() < 1e-6);
    CHECK((sol.mu_under.array() * (inst.f_max + sol.f_star).array()).abs().maxCoeff() < 1e-6);
    CHECK(kkt_stationarity(inst, sol) < 1e-6);
    CHECK(sol.kkt_residual < 1e-6);
    CHECK(sol.pi_star(inst.grid->ref_index) == sol.lambda);
}

}  // namespace

TEST_SUITE("opf")
{
    TEST_CASE("two-bus uncongested")
    {
        DcOpfInstance inst = two_bus_instance(2.0);
        CHECK(inst.a(0) == doctest::Approx(1.0));
        CHECK(inst.a(1) == doctest::Approx(2.0));
        DcOpfSolution sol = solve_dcopf(inst);
        check_solution_invariants(inst, sol);
        CHECK(sol.p_star(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
        CHECK(sol.p_star(1) + 1.0 == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
        CHECK(sol.pi_star(0) == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
        CHECK(sol.pi_star(1) == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
        CHECK(binding_lines(sol.f_star, inst.f_max)[0] == 0);

        const Oracle o = brute_force(inst);
        CHECK(std::abs(o.objective - sol.objective) < 1e-2);
    }

    TEST_CASE("two-bus congested")
    {
        DcOpfInstance inst = two_bus_instance(0.5);
        DcOpfSolution sol = solve_dcopf(inst);
        check_solution_invariants(inst, sol);
        CHECK(sol.p_star(0) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(sol.f_star(0) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(sol.lambda == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(sol.pi_star(0) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(sol.pi_star(1) == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(sol.mu_bar(0) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(sol.mu_under(0) == doctest::Approx(0.0));
        CHECK(binding_lines(sol.f_star, inst.f_max)[0] == 1);
        CHECK((lmp_from_duals(sol, *inst.grid) - sol.pi_star).norm() == 0.0);
    }

    TEST_CASE("LMP is invariant to line orientation")
    {
        DcOpfInstance inst = two_bus_instance(0.5);
        DcOpfSolution sol = solve_dcopf(inst);
        GridLinAlg flipped = *inst.grid;
        flipped.isf.row(0) *= -1.0;
        DcOpfSolution swapped = sol;
        std::swap(swapped.mu_bar, swapped.mu_under);
        CHECK((lmp_from_duals(swapped, flipped) - sol.pi_star).norm() < 1e-14);
    }

    TEST_CASE("infeasible instances")
    {
        DcOpfInstance inst = two_bus_instance(2.0);
        inst.p_min = inst.p_max = Eigen::Vector2d(0.5, -1.0);
        CHECK(solve_dcopf(inst).status == OpfStatus::Infeasible);
        CHECK_THROWS_AS(solve_dcopf_or_throw(inst), Error);

        // balance is possible but bus 3 cannot be served through a 0.2 limit
        GridCase c = testutil::fixture_case("path3");
        DcOpfInstance path = make_instance(c, shared_grid(c));
        path.f_max(1) = 0.2;
        DcOpfSolution sol = solve_dcopf(path);
        CHECK(sol.status == OpfStatus::Infeasible);
        try {
            solve_dcopf_or_throw(path);
            FAIL("expected Infeasible");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Infeasible);
        }
    }

    TEST_CASE("solver matches brute force on small instances")
    {
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> u(0.0, 1.0);

        GridCase tri = testutil::fixture_case("triangle3");
        auto tri_grid = shared_grid(tri);
        GridCase path = testutil::fixture_case("path3");
        auto path_grid = shared_grid(path);
        int congested = 0;
        for (int trial = 0; trial < 24; ++trial) {
            DcOpfInstance inst;
            if (trial % 2 == 0) {
                // three flexible nodes on the triangle
                inst = make_instance(tri, tri_grid);
                for (int i = 0; i < 3; ++i) {
                    inst.a(i) = 0.5 + 2.0 * u(rng);
                    inst.b(i) = 10.0 * u(rng);
                }
                inst.p_min = Eigen::Vector3d(0.0, -1.2 - 0.3 * u(rng), -0.9 - 0.3 * u(rng));
                inst.p_max = Eigen::Vector3d(1.5 + u(rng), -0.1, 0.2 * u(rng));
                inst.f_max = Eigen::Vector3d::Constant(0.4 + 0.6 * u(rng));
            } else {
                // two flexible nodes and a fixed load; costs kept O(1) so the
                // 1e-3 lattice resolves the objective to 1e-2
                inst = make_instance(path, path_grid);
                for (int i = 0; i < 2; ++i) {
                    inst.a(i) = 0.5 + 2.0 * u(rng);
                    inst.b(i) = 10.0 * u(rng);
                }
                inst.f_max(0) = 0.45 + 0.5 * u(rng);
                inst.f_max(1) = 0.36 + 0.2 * u(rng);
            }
            DcOpfSolution sol = solve_dcopf(inst);
            if (sol.status == OpfStatus::Infeasible) continue;
            check_solution_invariants(inst, sol);
            const Oracle o = brute_force(inst);
            REQUIRE(std::isfinite(o.objective));
            INFO("trial " << trial << " solver p " << sol.p_star.transpose() << " oracle p " << o.p.transpose()
                          << " f " << sol.f_star.transpose() << " fmax " << inst.f_max.transpose());
            CHECK(std::abs(o.objective - sol.objective) < 1e-2);
            CHECK(sol.objective <= o.objective + 1e-9);
            // binding sets agree at a tolerance above the lattice resolution
            const double tol = 5e-3;
            const Eigen::VectorXd fo = inst.grid->isf * o.p;
            for (int k = 0; k < inst.grid->n_lines(); ++k) {
                const bool solver_binds = std::abs(sol.f_star(k)) >= inst.f_max(k) - tol;
                const bool oracle_binds = std::abs(fo(k)) >= inst.f_max(k) - tol;
                CHECK(solver_binds == oracle_binds);
                congested += solver_binds;
            }
        }
        CHECK(congested > 0);
    }

    TEST_CASE("KKT contract on perturbed PGLib instances")
    {
        for (int n : {14, 118}) {
            GridCase c = testutil::pglib_case(n);
            auto grid = shared_grid(c);
            int binding = 0;
            for (int t = 0; t < 8; ++t) {
                auto rng = keyed_rng(99, static_cast<std::uint64_t>(t));
                Perturbation p;
                p.load_scale.resize(c.n_buses());
                p.cost_a_scale.resize(c.n_buses());
                p.cost_b_scale.resize(c.n_buses());
                for (int i = 0; i < c.n_buses(); ++i) {
                    p.load_scale(i) = uniform(rng, 0.85, 1.15);
                    p.cost_a_scale(i) = uniform(rng, 0.5, 1.5);
                    p.cost_b_scale(i) = uniform(rng, 0.5, 1.5);
                }
                const NodalData d = make_nodal_data(c, grid, &p);
                const DcOpfSolution sol = solve_dcopf(d.instance);
                check_solution_invariants(d.instance, sol);
                const auto bind = binding_lines(sol.f_star, d.instance.f_max);
                const int nb = static_cast<int>(std::count(bind.begin(), bind.end(), 1));
                binding += nb;
                if (nb == 0) CHECK(sol.pi_star.maxCoeff() - sol.pi_star.minCoeff() < 1e-6);
            }
            INFO("case " << n << " binding events " << binding);
            if (n == 118) CHECK(binding > 0);
        }
    }

    TEST_CASE("dc flow violation")
    {
        DcOpfInstance inst = two_bus_instance(0.5);
        // p2 = -0.7 drives 0.7 from bus 1 to bus 2
        FlowViolation v = dc_flow_violation(Eigen::Vector2d(0.7, -0.7), *inst.grid, inst.f_max);
        CHECK(v.total == doctest::Approx(0.2));
        CHECK(dc_flow_violation(Eigen::Vector2d(0.3, -0.3), *inst.grid, inst.f_max).total == 0.0);

        GridCase c = testutil::pglib_case(14);
        auto grid = shared_grid(c);
        const Eigen::VectorXd f = grid->limits() * 0.3;
        std::mt19937_64 rng(3);
        std::normal_distribution<double> nd;
        for (int t = 0; t < 20; ++t) {
            Eigen::VectorXd p1(14), p2(14);
            for (int i = 0; i < 14; ++i) {
                p1(i) = nd(rng);
                p2(i) = nd(rng);
            }
            const double mid = dc_flow_violation(0.5 * (p1 + p2), *grid, f).total;
            const double avg =
                0.5 * (dc_flow_violation(p1, *grid, f).total + dc_flow_violation(p2, *grid, f).total);
            CHECK(mid <= avg + 1e-12);
        }
    }

    TEST_CASE("ac apparent flow")
    {
        std::vector<Line> lines = {{0, 0, 1, 0.1, 10.0, 1.0}};
        GridLinAlg g = build_linalg(2, 0, {1, 2}, lines);
        ApparentFlow flat = ac_apparent_flow(Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 0), g);
        CHECK(flat.from_to(0) == 0.0);
        ApparentFlow s = ac_apparent_flow(Eigen::Vector2d(1, 1), Eigen::Vector2d(0, -0.1), g);
        CHECK(s.from_to(0) == doctest::Approx(20.0 * std::sin(0.05)).epsilon(1e-12));
        CHECK(s.from_to(0) == doctest::Approx(0.99958).epsilon(1e-5));
        CHECK(s.to_from(0) == doctest::Approx(s.from_to(0)));
        ApparentFlow uneven = ac_apparent_flow(Eigen::Vector2d(1.05, 0.95), Eigen::Vector2d(0, -0.1), g);
        CHECK(uneven.from_to(0) / uneven.to_from(0) == doctest::Approx(1.05 / 0.95));
    }

    TEST_CASE("dataset generation")
    {
        GridCase c = testutil::pglib_case(14);
        SampleSpec spec;
        spec.n_samples = 12;
        spec.seed = 17;
        spec.threads = 1;
        DatasetFile a = generate_dataset(c, spec);
        CHECK(a.n_samples() == 12);
        CHECK(a.header.n_features() == 6);
        CHECK(a.labels.cols() == a.header.label_width());
        spec.threads = 3;
        DatasetFile b = generate_dataset(c, spec);
        CHECK(serialize_dataset(a) == serialize_dataset(b));
        spec.seed = 18;
        CHECK_FALSE(generate_dataset(c, spec).features == a.features);

        spec.n_samples = 0;
        DatasetFile empty = generate_dataset(c, spec);
        CHECK(empty.n_samples() == 0);
        CHECK(parse_dataset(serialize_dataset(empty)) == empty);

        const Eigen::MatrixXd bind = a.label_block(kBindingChannel);
        const Eigen::MatrixXd pi = a.label_block("pi");
        for (int s = 0; s < a.n_samples(); ++s) {
            if (bind.row(s).sum() == 0.0) CHECK(pi.row(s).maxCoeff() - pi.row(s).minCoeff() < 1e-6);
            CHECK(std::abs(a.label(s, "p").sum()) < 1e-8);
        }
    }

    TEST_CASE("contingency datasets")
    {
        GridCase c = testutil::pglib_case(14);
        SampleSpec spec;
        spec.n_samples = 3;
        spec.outaged_branches = {2};
        DatasetFile d = generate_dataset(c, spec);
        CHECK(d.header.n_lines == 19);
        CHECK(d.header.metadata.at("outaged_branches") == nlohmann::json::array({2}));
        spec.outaged_branches = {0};
        try {
            generate_dataset(c, spec);
            FAIL("expected Infeasible");
        } catch (const Error& e) {
            // the remaining branch out of bus 1 cannot carry its generation
            CHECK(e.code() == ErrorCode::Infeasible);
        }
        // bus 8 hangs off a single branch
        int radial = -1;
        for (std::size_t k = 0; k < c.branches.size(); ++k) {
            if (c.branches[k].to == 8 || c.branches[k].from == 8) radial = static_cast<int>(k);
        }
        spec.outaged_branches = {radial};
        try {
            generate_dataset(c, spec);
            FAIL("expected WouldDisconnect");
        } catch (const IslandError& e) {
            CHECK(e.code() == ErrorCode::WouldDisconnect);
        }
    }

    TEST_CASE("too many rejections")
    {
        GridCase c = testutil::fixture_case("path3");
        for (auto& br : c.branches) br.rate_a = 0.36;
        SampleSpec spec;
        spec.n_samples = 5;
        spec.load_scale_range = {1.0, 1.2};
        try {
            generate_dataset(c, spec);
            FAIL("expected TooManyRejections");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::TooManyRejections);
        }
    }
}
