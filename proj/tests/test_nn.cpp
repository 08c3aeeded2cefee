#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "gridflow/adam.hpp"
#include "gridflow/autodiff.hpp"
#include "gridflow/error.hpp"
#include "gridflow/latent_chain.hpp"
#include "gridflow/loss.hpp"
#include "gridflow/model_io.hpp"
#include "gridflow/models.hpp"
#include "gridflow/opf.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gridflow;
using ad::Matrix;

namespace {

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = u(rng);
    return m;
}

GridLinAlg triangle(double limit = 1.0)
{
    std::vector<Line> lines = {{0, 0, 1, 1.0, 1.0, limit}, {1, 0, 2, 1.0, 1.0, limit}, {2, 1, 2, 1.0, 1.0, limit}};
    return build_linalg(3, 0, {1, 2, 3}, lines);
}

GridLinAlg path3()
{
    std::vector<Line> lines = {{0, 0, 1, 0.5, 2.0, 1.0}, {1, 1, 2, 0.25, 4.0, 1.0}};
    return build_linalg(3, 0, {1, 2, 3}, lines);
}

int check_parameter_gradients(std::vector<ad::Parameter>& params, const std::function<ad::Var(ad::Tape&)>& loss)
{
    const testutil::GradientCheck r = testutil::check_gradients(params, loss);
    INFO("worst ", r.worst_entry);
    CHECK(r.failed == 0);
    return r.checked;
}

// Same check for leaf inputs of a single op composition.
void check_input_gradients(std::vector<Matrix> inputs, const std::function<ad::Var(std::vector<ad::Var>&)>& build)
{
    std::vector<ad::Parameter> params;
    for (std::size_t i = 0; i < inputs.size(); ++i) params.push_back({"x" + std::to_string(i), inputs[i], {}, {}});
    check_parameter_gradients(params, [&](ad::Tape& t) {
        std::vector<ad::Var> vars;
        for (auto& p : params) vars.push_back(t.parameter(p));
        return ad::sum(build(vars));
    });
}

ChainInputs chain_inputs(std::mt19937_64& rng, int batch, int n)
{
    ChainInputs in;
    in.a = random_matrix(rng, batch, n, 0.5, 1.5);
    in.b = random_matrix(rng, batch, n, 0.0, 1.0);
    in.p_min = random_matrix(rng, batch, n, -0.6, -0.2);
    in.p_max = random_matrix(rng, batch, n, 0.2, 0.6);
    // node 0 is a fixed injection
    in.p_min.col(0).setConstant(0.1);
    in.p_max.col(0).setConstant(0.1);
    return in;
}

}  // namespace

TEST_SUITE("nn")
{
    TEST_CASE("quadratic bowl gradient is exactly 2w")
    {
        ad::Parameter w{"w", Matrix(3, 1), {}, {}};
        w.value << 1.5, -2.0, 0.25;
        ad::Tape tape;
        tape.backward(ad::sum(ad::square(tape.parameter(w))));
        CHECK(w.grad == 2.0 * w.value);
    }

    TEST_CASE("graph-not-recorded errors")
    {
        ad::Tape tape;
        const ad::Var x = tape.variable(Matrix::Ones(1, 1));
        CHECK(code_of([&] { tape.grad(x); }) == ErrorCode::GraphNotRecorded);
        tape.clear();
        CHECK(code_of([&] { tape.backward(x); }) == ErrorCode::GraphNotRecorded);
        ad::Tape other;
        const ad::Var y = other.variable(Matrix::Ones(1, 1));
        CHECK(code_of([&] { tape.backward(y); }) == ErrorCode::GraphNotRecorded);
        CHECK(code_of([&] { ad::Var empty; ad::sum(empty); }) == ErrorCode::GraphNotRecorded);
        const ad::Var z = tape.variable(Matrix::Ones(2, 2));
        CHECK(code_of([&] { tape.backward(z); }) == ErrorCode::DimensionMismatch);
    }

    TEST_CASE("op gradients match finite differences")
    {
        std::mt19937_64 rng(11);
        const Matrix a = random_matrix(rng, 3, 4);
        const Matrix b = random_matrix(rng, 4, 2);
        const Matrix c = random_matrix(rng, 3, 4);
        const Matrix row = random_matrix(rng, 1, 4);
        check_input_gradients({a, b}, [](auto& v) { return ad::matmul(v[0], v[1]); });
        check_input_gradients({a, c}, [](auto& v) { return ad::mul(ad::sub(v[0], v[1]), ad::add(v[0], v[1])); });
        check_input_gradients({a, row}, [](auto& v) { return ad::square(ad::add_row(v[0], v[1])); });
        check_input_gradients({a}, [](auto& v) { return ad::mul(ad::sigmoid(v[0], 3.0), v[0]); });
        check_input_gradients({a}, [](auto& v) { return ad::add(ad::cos(v[0]), ad::exp(ad::scale(v[0], 0.5))); });
        check_input_gradients({a}, [](auto& v) { return ad::log(ad::add_scalar(ad::square(v[0]), 1.0)); });
        check_input_gradients({a}, [](auto& v) { return ad::sqrt_safe(ad::add_scalar(ad::square(v[0]), 0.1)); });
        check_input_gradients({a}, [](auto& v) { return ad::square(ad::logsumexp_rows(v[0], 0.3)); });
        check_input_gradients({a}, [](auto& v) { return ad::square(ad::row_sums(v[0])); });
        check_input_gradients({a}, [](auto& v) { return ad::square(ad::gather_cols(v[0], {3, 0, 3})); });
        check_input_gradients({random_matrix(rng, 2, 6)}, [](auto& v) {
            return ad::square(ad::blocks_to_rows(ad::scale(ad::rows_to_blocks(v[0], 3), 2.0), 3));
        });
        check_input_gradients({a}, [](auto& v) { return ad::mean(ad::square(ad::relu(v[0]))); });

        const GridLinAlg g = path3();
        check_input_gradients({random_matrix(rng, 6, 2), random_matrix(rng, 3, 3)}, [&](auto& v) {
            return ad::square(ad::graph_filter(v[0], v[1], g.mask));
        });
        check_input_gradients({random_matrix(rng, 6, 2), random_matrix(rng, 3, 2), random_matrix(rng, 1, 3)},
                              [](auto& v) { return ad::square(ad::node_head(v[0], v[1], v[2])); });

        Matrix y(3, 4);
        y << 1, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 0;
        Eigen::RowVectorXd w(4);
        w << 1.0, 2.0, 0.5, 3.0;
        check_input_gradients({a}, [&](auto& v) { return ad::bce_with_logits(v[0], y, w); });
    }

    TEST_CASE("bce matches the direct formula")
    {
        ad::Tape tape;
        Matrix z(1, 2);
        z << 0.3, -1.2;
        Matrix y(1, 2);
        y << 1.0, 0.0;
        Eigen::RowVectorXd w(2);
        w << 2.0, 1.0;
        const double s0 = 1.0 / (1.0 + std::exp(-0.3));
        const double s1 = 1.0 / (1.0 + std::exp(1.2));
        const double expected = (-2.0 * std::log(s0) - std::log(1.0 - s1)) / 2.0;
        CHECK(ad::bce_with_logits(tape.constant(z), y, w).value()(0, 0) == doctest::Approx(expected).epsilon(1e-14));
    }

    TEST_CASE("masked filter gradient is zero outside the mask")
    {
        const GridLinAlg g = path3();
        std::mt19937_64 rng(5);
        ad::Parameter w{"W", random_matrix(rng, 3, 3), {}, {}};
        ad::Tape tape;
        const ad::Var x = tape.constant(random_matrix(rng, 9, 2));
        tape.backward(ad::sum(ad::square(ad::graph_filter(x, tape.parameter(w), g.mask))));
        CHECK(w.grad(0, 2) == 0.0);
        CHECK(w.grad(2, 0) == 0.0);
        CHECK(w.grad(0, 1) != 0.0);
    }

    TEST_CASE("identity GNN stack passes non-negative features through")
    {
        const GridLinAlg g = triangle();
        ModelSpec spec{ModelKind::Gnn, 3, {2, 2, 2}, {"pi"}, 0};
        GnnModel model(spec, g.mask, 1);
        for (int t = 0; t < 2; ++t) {
            model.parameter("H" + std::to_string(t)).value = Matrix::Identity(2, 2);
            model.parameter("b" + std::to_string(t)).value.setZero();
        }
        // Head weights pick channel 0 only, so the output is the first feature.
        model.parameter("head_W_pi").value << 1, 0, 1, 0, 1, 0;
        model.parameter("head_b_pi").value.setZero();
        std::mt19937_64 rng(3);
        const Matrix x = random_matrix(rng, 4, 6, 0.0, 2.0);
        ad::Tape tape;
        const Matrix out = model.forward(tape, x).channels.at("pi").value();
        for (int b = 0; b < 4; ++b) {
            for (int i = 0; i < 3; ++i) CHECK(out(b, i) == doctest::Approx(x(b, 2 * i)).epsilon(1e-15));
        }
    }

    TEST_CASE("one-hop locality on a path")
    {
        const GridLinAlg g = path3();
        ModelSpec spec{ModelKind::Gnn, 3, {2, 3}, {"pi"}, 0};
        GnnModel model(spec, g.mask, 4);
        model.parameter("W0").value = Matrix::Constant(3, 3, 0.7);
        model.parameter("W0").apply_support();
        std::mt19937_64 rng(8);
        Matrix x = random_matrix(rng, 1, 6);
        ad::Tape tape;
        const Matrix before = model.forward(tape, x).channels.at("pi").value();
        x(0, 4) += 5.0;
        x(0, 5) -= 3.0;
        tape.clear();
        const Matrix after = model.forward(tape, x).channels.at("pi").value();
        CHECK(after(0, 0) == before(0, 0));
        CHECK(after(0, 1) != before(0, 1));
    }

    TEST_CASE("FCNN zero weights and a single linear layer")
    {
        ModelSpec spec{ModelKind::Fcnn, 3, {2, 2}, {"pi"}, 0};
        FcnnModel model(spec, 2);
        std::mt19937_64 rng(9);
        const Matrix x = random_matrix(rng, 5, 6);
        for (auto& p : model.parameters()) p.value.setZero();
        ad::Tape tape;
        CHECK(model.forward(tape, x).channels.at("pi").value().isZero(0.0));

        FcnnModel fresh(spec, 2);
        tape.clear();
        const Matrix out = fresh.forward(tape, x).channels.at("pi").value();
        const Matrix hidden =
            ((x * fresh.parameter("W0").value).rowwise() + fresh.parameter("b0").value.row(0)).cwiseMax(0.0);
        const Matrix expected =
            (hidden * fresh.parameter("head_W_pi").value).rowwise() + fresh.parameter("head_b_pi").value.row(0);
        CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(code_of([&] { fresh.forward(tape, random_matrix(rng, 2, 5)); }) == ErrorCode::ShapeMismatch);
    }

    TEST_CASE("118-bus widths: GNN runs and is far smaller than the FCNN")
    {
        const GridCase c = testutil::pglib_case(118);
        const GridLinAlg g = build_linalg(c);
        ModelSpec spec{ModelKind::Gnn, 118, {4, 5, 10, 10, 5, 5}, {"pi"}, 0};
        auto gnn = make_model(spec, g, 1);
        std::mt19937_64 rng(1);
        ad::Tape tape;
        const Matrix out = gnn->forward(tape, random_matrix(rng, 3, 118 * 4)).channels.at("pi").value();
        CHECK(out.rows() == 3);
        CHECK(out.cols() == 118);
        CHECK(out.allFinite());
        CHECK(gnn->parameter_count() == total_parameter_count(spec, g.mask.nnz()));
        ModelSpec fspec = spec;
        fspec.kind = ModelKind::Fcnn;
        const long fcnn = total_parameter_count(fspec, 0);
        CHECK(static_cast<double>(gnn->parameter_count()) / static_cast<double>(fcnn) < 0.1);
        MESSAGE("118-bus parameters: GNN ", gnn->parameter_count(), " (dense storage ",
                gnn->dense_parameter_count(), "), FCNN ", fcnn);
    }

    TEST_CASE("parameter counts follow the closed forms")
    {
        const GridLinAlg g = triangle();
        ModelSpec spec{ModelKind::Gnn, 3, {4, 5, 3}, {"pi", "vm"}, 2};
        GnnModel gnn(spec, g.mask, 0);
        CHECK(gnn.parameter_count() == total_parameter_count(spec, g.mask.nnz()));
        ModelSpec fspec = spec;
        fspec.kind = ModelKind::Fcnn;
        FcnnModel fcnn(fspec, 0);
        CHECK(fcnn.parameter_count() == total_parameter_count(fspec, 0));
        CHECK(fcnn.parameter_count() == fcnn.dense_parameter_count());
        // FCNN layer count is exactly c N^2 + c' N.
        for (int n : {14, 118, 300}) {
            ModelSpec s = fspec;
            s.n_buses = n;
            CHECK(layer_parameter_count(s, 0, 1) == 15L * n * n + 3L * n);
        }
    }

    TEST_CASE("hard projection examples and grid-search oracle")
    {
        ChainInputs in;
        in.a = Matrix::Ones(1, 2);
        in.b = Matrix::Zero(1, 2);
        in.p_min = Matrix::Zero(1, 2);
        in.p_max = Matrix::Constant(1, 2, 3.0);
        Matrix pi(1, 2);
        pi << 4.0, 10.0;
        const Matrix p = hard_projection(pi, in);
        CHECK(p(0, 0) == 2.0);
        CHECK(p(0, 1) == 3.0);

        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 40; ++trial) {
            ChainInputs one;
            one.a = Matrix::Constant(1, 1, 0.2 + 2.0 * u(rng));
            one.b = Matrix::Constant(1, 1, -1.0 + 2.0 * u(rng));
            one.p_min = Matrix::Constant(1, 1, -1.0 + u(rng));
            one.p_max = Matrix::Constant(1, 1, one.p_min(0, 0) + 0.1 + u(rng));
            const Matrix price = Matrix::Constant(1, 1, -3.0 + 6.0 * u(rng));
            // argmin a p^2 + (b - pi) p over the box, on a 1e-4 lattice
            double best = 0.0;
            double best_val = std::numeric_limits<double>::infinity();
            for (double q = one.p_min(0, 0); q <= one.p_max(0, 0) + 1e-12; q += 1e-4) {
                const double val = one.a(0, 0) * q * q + (one.b(0, 0) - price(0, 0)) * q;
                if (val < best_val) {
                    best_val = val;
                    best = q;
                }
            }
            CHECK(std::abs(hard_projection(price, one)(0, 0) - best) <= 1e-4);
        }
    }

    TEST_CASE("soft projection saturation, boundary value and convergence")
    {
        const double k = 100.0;
        // far inside: |r - bound| k > 40
        CHECK(std::abs(soft_clamp(0.5, 0.0, 1.0, k) - 0.5) < 1e-12);
        // r on the upper limit, compared against the two-line formula evaluated directly
        {
            const double lo = -1.0;
            const double hi = 0.4;
            const double r = hi;
            const double s1 = 1.0 / (1.0 + std::exp(-k * (lo - r)));
            const double r1 = s1 * (lo - r) + r;
            const double s2 = 1.0 / (1.0 + std::exp(-k * (hi - r1)));
            const double expected = s2 * (r1 - hi) + hi;
            CHECK(soft_clamp(r, lo, hi, k) == doctest::Approx(expected).epsilon(1e-15));
            CHECK(soft_clamp(r, lo, hi, k) == doctest::Approx(hi).epsilon(1e-14));
        }
        double previous = std::numeric_limits<double>::infinity();
        for (double kk = 10.0; kk <= 10240.0; kk *= 2.0) {
            double gap = 0.0;
            for (double r = -2.0; r <= 2.0; r += 1e-3) {
                gap = std::max(gap, std::abs(soft_clamp(r, -0.5, 0.8, kk) - std::clamp(r, -0.5, 0.8)));
            }
            CHECK(gap < previous);
            previous = gap;
        }
        // Clamped entries stay within 4/k of their bound.
        for (double r = -3.0; r <= 3.0; r += 1e-2) {
            if (r <= -0.5) CHECK(std::abs(soft_clamp(r, -0.5, 0.8, k) + 0.5) <= 4.0 / k);
            if (r >= 0.8) CHECK(std::abs(soft_clamp(r, -0.5, 0.8, k) - 0.8) <= 4.0 / k);
        }
    }

    TEST_CASE("soft projection on tape matches the scalar map and bypasses fixed nodes")
    {
        std::mt19937_64 rng(2);
        const ChainInputs in = chain_inputs(rng, 3, 4);
        const Matrix pi = random_matrix(rng, 3, 4, -1.0, 2.0);
        ad::Tape tape;
        const Matrix p = soft_projection(tape.constant(pi), in, 100.0).value();
        for (int b = 0; b < 3; ++b) {
            CHECK(p(b, 0) == in.p_min(b, 0));
            for (int i = 1; i < 4; ++i) {
                const double r = (pi(b, i) - in.b(b, i)) / (2.0 * in.a(b, i));
                CHECK(p(b, i) == doctest::Approx(soft_clamp(r, in.p_min(b, i), in.p_max(b, i), 100.0)));
            }
        }
        // Hard projection always lands in the box.
        const Matrix h = hard_projection(random_matrix(rng, 3, 4, -50.0, 50.0), in);
        CHECK((h.array() >= in.p_min.array()).all());
        CHECK((h.array() <= in.p_max.array()).all());
    }

    TEST_CASE("dc chain reproduces the solver optimum from its own prices")
    {
        const GridCase c = testutil::fixture_case("two_bus");
        auto g = std::make_shared<const GridLinAlg>(build_linalg(c));
        const DcOpfInstance inst = make_instance(c, g);
        const DcOpfSolution sol = solve_dcopf_or_throw(inst);
        ChainInputs in;
        in.a = inst.a.transpose();
        in.b = inst.b.transpose();
        in.p_min = inst.p_min.transpose();
        in.p_max = inst.p_max.transpose();
        ad::Tape tape;
        const DcChain hard = latent_chain_dc(tape.constant(sol.pi_star.transpose()), in, *g, false);
        CHECK((hard.p.value().transpose() - sol.p_star).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((hard.flows.value().transpose() - sol.f_star).cwiseAbs().maxCoeff() < 1e-8);
        const DcChain soft = latent_chain_dc(tape.constant(sol.pi_star.transpose()), in, *g, true, 1e4);
        CHECK((soft.p.value().transpose() - sol.p_star).cwiseAbs().maxCoeff() < 1e-3);
    }

    TEST_CASE("fixed nodes enter the flows as constants")
    {
        std::mt19937_64 rng(6);
        const GridLinAlg g = triangle();
        ChainInputs in = chain_inputs(rng, 1, 3);
        ad::Tape tape;
        const ad::Var pi = tape.variable(random_matrix(rng, 1, 3));
        const DcChain chain = latent_chain_dc(pi, in, g, true);
        tape.backward(ad::sum(chain.flows));
        CHECK(tape.grad(pi)(0, 0) == 0.0);
        CHECK(chain.p.value()(0, 0) == in.p_min(0, 0));
    }

    TEST_CASE("dc chain gradient matches finite differences")
    {
        std::mt19937_64 rng(12);
        const GridLinAlg g = triangle();
        const ChainInputs in = chain_inputs(rng, 2, 3);
        check_input_gradients({random_matrix(rng, 2, 3, -0.5, 1.5)}, [&](auto& v) {
            return latent_chain_dc(v[0], in, g, true).flows;
        });
    }

    TEST_CASE("ac chain hand values")
    {
        const GridLinAlg g = triangle();
        ad::Tape tape;
        Matrix p(1, 3);
        p << 0.0, 1.0, -1.0;
        const Matrix theta = dc_angles(tape.constant(p), g).value();
        CHECK(theta(0, 0) == 0.0);
        CHECK(theta(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
        CHECK(theta(0, 2) == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));

        const AcLineFlows flat = ac_flows(tape.constant(Matrix::Ones(1, 3)), tape.constant(Matrix::Zero(1, 3)), g);
        CHECK(flat.from_to.value().isZero(0.0));
        CHECK(flat.to_from.value().isZero(0.0));

        // Agrees with the plain evaluation used for reporting.
        Matrix vm(1, 3);
        vm << 1.02, 0.97, 1.05;
        const AcLineFlows s = ac_flows(tape.constant(vm), tape.constant(theta), g);
        const ApparentFlow ref = ac_apparent_flow(vm.row(0).transpose(), theta.row(0).transpose(), g);
        CHECK((s.from_to.value().row(0).transpose() - ref.from_to).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((s.to_from.value().row(0).transpose() - ref.to_from).cwiseAbs().maxCoeff() < 1e-14);
    }

    TEST_CASE("ac chain gradient matches finite differences")
    {
        std::mt19937_64 rng(13);
        const GridLinAlg g = triangle();
        const ChainInputs in = chain_inputs(rng, 2, 3);
        check_input_gradients({random_matrix(rng, 2, 3, -0.5, 1.5), random_matrix(rng, 2, 3, 0.95, 1.05)},
                              [&](auto& v) {
                                  const AcChain c = latent_chain_ac(v[0], v[1], in, g, true);
                                  return ad::add(c.s.from_to, c.s.to_from);
                              });
    }

    TEST_CASE("feasibility penalty")
    {
        ad::Tape tape;
        Eigen::VectorXd lim(3);
        lim << 1.0, 1.0, 2.0;
        Matrix f(1, 3);
        f << 0.5, -0.9, 1.5;
        CHECK(fr_penalty(tape.constant(f), lim, {}, true).value()(0, 0) == 0.0);
        f << 1.1, -1.3, 1.5;
        CHECK(fr_penalty(tape.constant(f), lim, {}, true).value()(0, 0) == doctest::Approx(0.4));
        CHECK(fr_penalty(tape.constant(f), lim, {0}, true).value()(0, 0) == doctest::Approx(0.1));
        CHECK(fr_penalty(tape.constant(f), lim, {}, false).value()(0, 0) == doctest::Approx(0.1));
        // batch mean
        Matrix f2(2, 3);
        f2 << 1.1, -1.3, 1.5, 0, 0, 0;
        CHECK(fr_penalty(tape.constant(f2), lim, {}, true).value()(0, 0) == doctest::Approx(0.2));

        double gap = 0.0;
        for (double z = -0.05; z <= 0.05; z += 1e-5) {
            Matrix one = Matrix::Constant(1, 1, 1.0 + z);
            Eigen::VectorXd l1 = Eigen::VectorXd::Ones(1);
            const double smooth = fr_penalty(tape.constant(one), l1, {}, false, true, 1e4).value()(0, 0);
            gap = std::max(gap, std::abs(smooth - std::max(0.0, z)));
        }
        CHECK(gap < 1e-3);
    }

    TEST_CASE("composite loss arithmetic and missing channels")
    {
        ad::Tape tape;
        LossConfig cfg;
        LossInputs in;
        Matrix pred(1, 2);
        pred << 1.1, 0.8;
        Matrix label(1, 2);
        label << 1.0, 1.0;
        in.predictions["pi"] = tape.constant(pred);
        in.targets["pi"] = label;
        CHECK(composite_loss(in, cfg).total.value()(0, 0) == doctest::Approx(0.05));

        in.predictions["pi"] = tape.constant(label);
        cfg.fr_mode = FrMode::Dc;
        Eigen::VectorXd lim = Eigen::VectorXd::Ones(2);
        in.fr = fr_penalty(tape.constant(Matrix::Constant(1, 2, 0.5)), lim, {}, true);
        CHECK(composite_loss(in, cfg).total.value()(0, 0) == 0.0);

        cfg.fr_mode = FrMode::Ac;
        CHECK(code_of([&] { composite_loss(in, cfg); }) == ErrorCode::MissingChannel);
        cfg.fr_mode = FrMode::None;
        in.targets.clear();
        CHECK(code_of([&] { composite_loss(in, cfg); }) == ErrorCode::MissingChannel);
        in.targets["pi"] = label;
        cfg.gamma_p = 1.0;
        CHECK(code_of([&] { composite_loss(in, cfg); }) == ErrorCode::MissingChannel);
    }

    TEST_CASE("full GNN + ac feasibility loss: every parameter gradient")
    {
        std::mt19937_64 rng(17);
        const GridLinAlg g = triangle(0.05);
        ModelSpec spec{ModelKind::Gnn, 3, {4, 3, 3}, {"pi", "vm"}, 0};
        auto model = make_model(spec, g, 99);
        const Matrix x = random_matrix(rng, 2, 12);
        const ChainInputs in = chain_inputs(rng, 2, 3);
        const Matrix pi_star = random_matrix(rng, 2, 3);
        const Matrix vm_star = random_matrix(rng, 2, 3, -0.5, 0.5);
        const Matrix p_star = random_matrix(rng, 2, 3, -0.2, 0.2);
        LossConfig cfg;
        cfg.fr_mode = FrMode::Ac;
        cfg.gamma_fr = 1.0;
        cfg.use_linf_pi = true;
        cfg.linf_temperature = 0.5;
        cfg.gamma_p = 0.5;
        double fr_value = 0.0;
        auto loss = [&](ad::Tape& t) {
            const ModelOutputs out = model->forward(t, x);
            const ad::Var vm = ad::add_scalar(ad::scale(out.channels.at("vm"), 0.05), 1.0);
            const AcChain chain = latent_chain_ac(out.channels.at("pi"), vm, in, g, true, 20.0);
            LossInputs li;
            li.predictions = out.channels;
            li.targets = {{"pi", pi_star}, {"vm", vm_star}};
            li.fr = ad::add(fr_penalty(chain.s.from_to, g.limits(), {}, false),
                            fr_penalty(chain.s.to_from, g.limits(), {}, false));
            li.p_hat = chain.p;
            li.p_target = p_star;
            const LossTerms terms = composite_loss(li, cfg);
            fr_value = terms.fr;
            return terms.total;
        };
        const int n = check_parameter_gradients(model->parameters(), loss);
        CHECK(n == model->dense_parameter_count());
        CHECK(fr_value > 0.0);
        for (int t = 0; t < 2; ++t) {
            const auto& w = model->parameter("W" + std::to_string(t));
            CHECK(w.grad.cwiseProduct((1.0 - w.support.array()).matrix()).isZero(0.0));
        }
    }

    TEST_CASE("Adam: zero gradient, decay, convergence and determinism")
    {
        std::vector<ad::Parameter> ps{{"w", Matrix::Constant(2, 2, 0.5), Matrix::Zero(2, 2), {}}};
        Adam adam;
        adam.step(ps);
        CHECK(ps[0].value == Matrix::Constant(2, 2, 0.5));
        CHECK(adam.first_moment()[0].isZero(0.0));

        ps[0].grad.setConstant(1.0);
        adam.step(ps);
        const Matrix m1 = adam.first_moment()[0];
        const Matrix v1 = adam.second_moment()[0];
        ps[0].grad.setZero();
        adam.step(ps);
        CHECK(adam.first_moment()[0] == 0.9 * m1);
        CHECK(adam.second_moment()[0] == 0.999 * v1);

        std::vector<ad::Parameter> q{{"q", Matrix::Zero(1, 1), {}, {}}};
        Adam opt({1e-2, 0.9, 0.999, 1e-8});
        for (int i = 0; i < 500; ++i) {
            q[0].grad = 2.0 * (q[0].value.array() - 1.0).matrix();
            opt.step(q);
        }
        CHECK(std::abs(q[0].value(0, 0) - 1.0) < 1e-6);
    }

    TEST_CASE("training steps keep the mask and are bit-identical across runs")
    {
        const GridCase c = testutil::pglib_case(14);
        const GridLinAlg g = build_linalg(c);
        auto run = [&] {
            ModelSpec spec{ModelKind::Gnn, 14, {4, 5, 5}, {"pi"}, 0};
            auto model = make_model(spec, g, 3);
            std::mt19937_64 rng(4);
            const Matrix x = random_matrix(rng, 4, 56);
            const Matrix y = random_matrix(rng, 4, 14);
            Adam opt({1e-2});
            std::vector<double> losses;
            for (int step = 0; step < 10; ++step) {
                ad::Tape tape;
                model->zero_grad();
                LossInputs li;
                li.predictions = model->forward(tape, x).channels;
                li.targets["pi"] = y;
                const ad::Var loss = composite_loss(li, {}).total;
                losses.push_back(loss.value()(0, 0));
                tape.backward(loss);
                opt.step(model->parameters());
            }
            return std::make_pair(std::move(model), losses);
        };
        auto [m1, l1] = run();
        auto [m2, l2] = run();
        CHECK(l1 == l2);
        for (std::size_t k = 0; k < m1->parameters().size(); ++k) {
            CHECK(m1->parameters()[k].value == m2->parameters()[k].value);
        }
        for (int t = 0; t < 2; ++t) {
            const auto& w = m1->parameter("W" + std::to_string(t));
            CHECK(w.value.cwiseProduct((1.0 - w.support.array()).matrix()).isZero(0.0));
        }
    }

    TEST_CASE("two-sample overfit: loss falls over the first 10 Adam steps")
    {
        const GridLinAlg g = triangle();
        ModelSpec spec{ModelKind::Gnn, 3, {4, 6, 6}, {"pi"}, 0};
        auto model = make_model(spec, g, 5);
        std::mt19937_64 rng(23);
        const Matrix x = random_matrix(rng, 2, 12);
        const Matrix y = random_matrix(rng, 2, 3);
        Adam opt({1e-2});
        double previous = std::numeric_limits<double>::infinity();
        for (int step = 0; step < 10; ++step) {
            ad::Tape tape;
            model->zero_grad();
            LossInputs li;
            li.predictions = model->forward(tape, x).channels;
            li.targets["pi"] = y;
            const ad::Var loss = composite_loss(li, {}).total;
            CHECK(loss.value()(0, 0) < previous);
            previous = loss.value()(0, 0);
            tape.backward(loss);
            opt.step(model->parameters());
        }
    }

    TEST_CASE("mask surgery zeroes removed adjacencies")
    {
        const GridLinAlg g = triangle();
        ModelSpec spec{ModelKind::Gnn, 3, {2, 2}, {"pi"}, 0};
        const Matrix init = normalized_bbus(g);
        GnnModel model(spec, g.mask, 0, &init);
        CHECK(model.parameter("W0").value(1, 2) != 0.0);
        model.set_mask(GraphMask(3, {{0, 1}, {0, 2}}));
        CHECK(model.parameter("W0").value(1, 2) == 0.0);
        CHECK(model.parameter("W0").value(2, 1) == 0.0);
        CHECK(model.parameter("W0").value(0, 1) != 0.0);
        CHECK(model.parameter_count() == total_parameter_count(spec, 7));
    }

    TEST_CASE("normalized B-bus has a unit diagonal")
    {
        const GridLinAlg g = path3();
        const Matrix w = normalized_bbus(g);
        for (int i = 0; i < 3; ++i) CHECK(w(i, i) == doctest::Approx(1.0));
        // path: degrees 2, 6, 4; off-diagonal -y / sqrt(d_i d_j)
        CHECK(w(0, 1) == doctest::Approx(-2.0 / std::sqrt(12.0)));
        CHECK(w(0, 2) == 0.0);
    }

    TEST_CASE("model checkpoints round-trip bit-exactly")
    {
        const GridLinAlg g = triangle();
        TrainedModel tm;
        tm.model = make_model({ModelKind::Gnn, 3, {2, 3, 2}, {"pi", "vm"}, 2}, g, 7);
        tm.scaler.feature_names = {"pmax", "b"};
        tm.scaler.feature_mean = Eigen::RowVectorXd::Constant(2, 1.0 / 3.0);
        tm.scaler.feature_std = Eigen::RowVectorXd::Constant(2, 0.1);
        tm.scaler.label_mean = {{"pi", 0.7}, {"vm", 1.0}};
        tm.scaler.label_std = {{"pi", 1.0 / 7.0}, {"vm", 0.02}};
        tm.info = {{"epochs", 3}};
        const auto path = testutil::temp_path("model.ckpt");
        save_model(path, tm);
        const TrainedModel back = load_model(path);
        CHECK(back.scaler == tm.scaler);
        CHECK(back.info == tm.info);
        CHECK(back.gnn()->mask() == tm.gnn()->mask());
        for (std::size_t k = 0; k < tm.model->parameters().size(); ++k) {
            CHECK(back.model->parameters()[k].value == tm.model->parameters()[k].value);
        }
        CHECK(serialize_checkpoint(to_checkpoint(back)) == serialize_checkpoint(to_checkpoint(tm)));

        TrainedModel f;
        f.model = std::make_unique<FcnnModel>(ModelSpec{ModelKind::Fcnn, 3, {2, 2}, {"pi"}, 0}, 1);
        f.scaler = tm.scaler;
        const TrainedModel fb = from_checkpoint(to_checkpoint(f));
        CHECK(fb.model->parameter("W0").value == f.model->parameter("W0").value);

        Checkpoint bad = to_checkpoint(tm);
        bad.manifest["model_format"] = 99;
        CHECK(code_of([&] { from_checkpoint(bad); }) == ErrorCode::VersionMismatch);
        Checkpoint wrong = to_checkpoint(tm);
        for (auto& a : wrong.arrays) {
            if (a.name == "param/H0") a.values = Matrix::Zero(5, 5);
        }
        CHECK(code_of([&] { from_checkpoint(wrong); }) == ErrorCode::ShapeMismatch);
        Checkpoint widths = to_checkpoint(tm);
        widths.manifest["widths"] = {2, 4, 2};
        CHECK(code_of([&] { from_checkpoint(widths); }) == ErrorCode::ShapeMismatch);
    }
}
