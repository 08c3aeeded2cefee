#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gridflow/case_io.hpp"
#include "gridflow/checkpoint.hpp"
#include "gridflow/dataset_io.hpp"
#include "gridflow/error.hpp"
#include "test_util.hpp"

using namespace gridflow;

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

std::string triangle_text()
{
    return read_text_file(testutil::source_path("tests/fixtures/triangle3.m"));
}

std::string replace_once(std::string s, const std::string& from, const std::string& to)
{
    auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    return s.replace(pos, from.size(), to);
}

// Independent reader for one numeric column of a matrix block.
std::vector<double> raw_column(const std::string& text, const std::string& field, int col)
{
    std::vector<double> out;
    auto start = text.find("mpc." + field + " = [");
    REQUIRE(start != std::string::npos);
    std::istringstream in(text.substr(text.find('\n', start) + 1));
    std::string line;
    while (std::getline(in, line) && line.find("];") == std::string::npos) {
        if (line.empty() || line.find('%') == 0) continue;
        std::istringstream row(line);
        double v = 0.0;
        for (int c = 0; c <= col; ++c) row >> v;
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST_SUITE("case_io")
{
    TEST_CASE("triangle fixture parses")
    {
        GridCase c = parse_matpower_case(triangle_text(), "triangle3");
        CHECK(c.n_buses() == 3);
        CHECK(c.branches.size() == 3);
        CHECK(c.n_live_branches() == 3);
        CHECK(c.ref_bus == 1);
        CHECK(c.buses[1].pd == doctest::Approx(0.6));
        CHECK(c.branches[2].x == 1.0);
        CHECK(c.branches[2].rate_a == doctest::Approx(1.0));
        CHECK(c.gens[0].pmax == doctest::Approx(2.0));
        CHECK(c.gens[0].cost_a == doctest::Approx(100.0));
        CHECK(c.gens[0].cost_b == doctest::Approx(2000.0));
    }

    TEST_CASE("validation errors")
    {
        const std::string t = triangle_text();
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "\t2\t3\t0\t1", "\t2\t9\t0\t1")); }) ==
              ErrorCode::MalformedBlock);
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "\t1\t3\t0\t0", "\t1\t1\t0\t0")); }) ==
              ErrorCode::NoRefBus);
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "\t2\t3\t0\t1\t", "\t2\t3\t0\t-1\t")); }) ==
              ErrorCode::MalformedBlock);
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "\t2\t0\t0\t3\t0.01", "\t1\t0\t0\t3\t0.01")); }) ==
              ErrorCode::UnsupportedCost);
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "\t3\t0.01\t20\t0;", "\t4\t1\t0.01\t20\t0;")); }) ==
              ErrorCode::UnsupportedCost);
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "\t1\t-360\t360;\n];", "\t1\t-360;\n];")); }) ==
              ErrorCode::MalformedBlock);
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "mpc.gencost", "mpc.gcost")); }) ==
              ErrorCode::MalformedBlock);
        CHECK(code_of([&] { parse_matpower_case(replace_once(t, "\t200\t0;", "\t0\t200;")); }) ==
              ErrorCode::MalformedBlock);
    }

    TEST_CASE("disconnected live topology reports islands")
    {
        std::string t = triangle_text();
        t = replace_once(t, "\t1\t3\t0\t1\t0\t100\t100\t100\t0\t0\t1", "\t1\t3\t0\t1\t0\t100\t100\t100\t0\t0\t0");
        t = replace_once(t, "\t2\t3\t0\t1\t0\t100\t100\t100\t0\t0\t1", "\t2\t3\t0\t1\t0\t100\t100\t100\t0\t0\t0");
        try {
            parse_matpower_case(t);
            FAIL("expected DisconnectedCase");
        } catch (const IslandError& e) {
            CHECK(e.code() == ErrorCode::DisconnectedCase);
            CHECK(e.islands().size() == 2);
        }
    }

    TEST_CASE("out-of-service branches are kept for bookkeeping")
    {
        std::string t = replace_once(triangle_text(), "\t2\t3\t0\t1\t0\t100\t100\t100\t0\t0\t1",
                                     "\t2\t3\t0\t1\t0\t100\t100\t100\t0\t0\t0");
        GridCase c = parse_matpower_case(t);
        CHECK(c.branches.size() == 3);
        CHECK(c.n_live_branches() == 2);
    }

    TEST_CASE("PGLib 118-bus case")
    {
        GridCase c = testutil::pglib_case(118);
        CHECK(c.n_buses() == 118);
        CHECK(c.branches.size() == 186);
        CHECK(c.gens.size() == 54);
        CHECK(c.ref_bus == 69);
    }

    TEST_CASE("per-unit conversion reproduces file values")
    {
        for (int n : {14, 118}) {
            const std::string text =
                read_text_file(testutil::source_path("data/cases/pglib_opf_case" + std::to_string(n) + "_ieee.m"));
            GridCase c = parse_matpower_case(text);
            auto pd = raw_column(text, "bus", 2);
            auto rate = raw_column(text, "branch", 5);
            auto pmax = raw_column(text, "gen", 8);
            REQUIRE(pd.size() == c.buses.size());
            REQUIRE(rate.size() == c.branches.size());
            for (std::size_t i = 0; i < pd.size(); ++i) {
                CHECK(std::abs(c.buses[i].pd * c.base_mva - pd[i]) <= 1e-12 * std::max(1.0, std::abs(pd[i])));
            }
            for (std::size_t i = 0; i < rate.size(); ++i) {
                CHECK(std::abs(c.branches[i].rate_a * c.base_mva - rate[i]) <= 1e-12 * std::abs(rate[i]));
            }
            for (std::size_t i = 0; i < pmax.size(); ++i) {
                CHECK(std::abs(c.gens[i].pmax * c.base_mva - pmax[i]) <= 1e-12 * std::max(1.0, std::abs(pmax[i])));
            }
        }
    }

    TEST_CASE("parse, write, parse is stable")
    {
        for (const GridCase& c : {testutil::fixture_case("triangle3"), testutil::pglib_case(14),
                                  testutil::pglib_case(118)}) {
            GridCase again = parse_matpower_case(write_matpower_case(c), c.name);
            CHECK(again == c);
        }
    }

    TEST_CASE("dataset round trip is bit exact")
    {
        DatasetFile d;
        d.header.case_name = "synthetic";
        d.header.n_buses = 2;
        d.header.n_lines = 1;
        d.header.feature_names = {"pmax", "pmin"};
        d.header.label_names = {"pi", "binding"};
        d.header.seed = 1234567890123ULL;
        d.header.metadata = {{"note", "two samples"}};
        d.features.resize(2, 4);
        d.features << 0.1, -1.0 / 3.0, 2.5e-17, 7.0, -0.0, 1e300, 3.0, std::nextafter(1.0, 2.0);
        d.labels.resize(2, 3);
        d.labels << 1.0 / 7.0, 2.0, 1.0, 5.0, -6.25, 0.0;

        const auto path = testutil::temp_path("roundtrip.csv");
        write_dataset(path, d);
        DatasetFile back = read_dataset(path);
        CHECK(back == d);
        CHECK(back.header.seed == 1234567890123ULL);
        CHECK(back.label(1, "pi")(1) == -6.25);
        CHECK(back.node_features(0)(1, 0) == 2.5e-17);

        DatasetFile empty = d.subset({});
        CHECK(parse_dataset(serialize_dataset(empty)) == empty);
    }

    TEST_CASE("dataset errors")
    {
        DatasetFile d;
        d.header.n_buses = 1;
        d.header.n_lines = 1;
        d.header.feature_names = {"pmax"};
        d.header.label_names = {"pi"};
        d.features = Eigen::MatrixXd::Ones(1, 1);
        d.labels = Eigen::MatrixXd::Ones(1, 1);
        std::string text = serialize_dataset(d);
        CHECK(code_of([&] { parse_dataset(text.substr(0, text.size() - 1) + ",1\n"); }) == ErrorCode::HeaderMismatch);
        CHECK(code_of([&] { parse_dataset(text.substr(0, text.size() - 2) + "nan\n"); }) ==
              ErrorCode::NonFiniteValue);
        d.labels(0, 0) = std::numeric_limits<double>::infinity();
        CHECK(code_of([&] { serialize_dataset(d); }) == ErrorCode::NonFiniteValue);
    }

    TEST_CASE("checkpoint container")
    {
        Checkpoint ck;
        ck.manifest = {{"kind", "test"}, {"n", 3}};
        Eigen::MatrixXd m(2, 3);
        m << 1, 2, 3, 4, 5, 1.0 / 3.0;
        ck.add("w", m);
        ck.add("empty", Eigen::MatrixXd(0, 4));
        const std::string bytes = serialize_checkpoint(ck);
        Checkpoint back = parse_checkpoint(bytes);
        CHECK(back.manifest == ck.manifest);
        CHECK(back.get("w") == m);
        CHECK(back.get("empty").cols() == 4);
        CHECK(code_of([&] { back.get("missing"); }) == ErrorCode::ShapeMismatch);
        CHECK(code_of([&] { parse_checkpoint("NOTACKPT" + bytes.substr(8)); }) == ErrorCode::VersionMismatch);
        CHECK(code_of([&] { parse_checkpoint(bytes.substr(0, bytes.size() - 3)); }) == ErrorCode::ShapeMismatch);
        CHECK(code_of([&] { parse_checkpoint(bytes + "x"); }) == ErrorCode::ShapeMismatch);
        std::string bumped = bytes;
        auto pos = bumped.find("\"format_version\":1");
        REQUIRE(pos != std::string::npos);
        bumped[pos + 17] = '2';
        CHECK(code_of([&] { parse_checkpoint(bumped); }) == ErrorCode::VersionMismatch);
    }

    TEST_CASE("topology reader")
    {
        const GridCase c = testutil::pglib_case(14);
        const CaseTopology t = parse_matpower_topology(read_text_file(testutil::source_path("data/cases/pglib_opf_case14_ieee.m")));
        CHECK(t.bus_ids.size() == 14);
        REQUIRE(t.edges.size() == c.branches.size());
        CHECK(t.edges.front() == std::pair<int, int>(0, 1));

        // the 300-bus case carries a negative reactance; only its topology is usable
        const auto path300 = testutil::source_path("data/cases/pglib_opf_case300_ieee.m");
        CHECK_THROWS_AS(load_matpower_case(path300), Error);
        const CaseTopology t300 = parse_matpower_topology(read_text_file(path300));
        CHECK(t300.bus_ids.size() == 300);
        CHECK(t300.edges.size() == 411);
    }
}
