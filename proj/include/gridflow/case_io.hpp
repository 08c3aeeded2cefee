#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridflow {

enum class BusType { PQ = 1, PV = 2, Ref = 3, Isolated = 4 };

/// Bus data in per-unit on the case base.
struct Bus {
    int id = 0;
    BusType type = BusType::PQ;
    double pd = 0.0;
    double qd = 0.0;
    double vmin = 0.9;
    double vmax = 1.1;

    bool operator==(const Bus&) const = default;
};

/// A series branch. Positive flow is from -> to. Reactance and resistance are
/// per-unit; admittance is |1 / (r + jx)|.
struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double admittance = 0.0;
    double rate_a = 0.0;
    bool in_service = true;

    bool operator==(const Branch&) const = default;
};

/// Generator with a polynomial cost a*p^2 + b*p in per-unit injection terms
/// (constant terms are dropped at parse time).
struct Generator {
    int bus = 0;
    double pmin = 0.0;
    double pmax = 0.0;
    double qmin = 0.0;
    double qmax = 0.0;
    bool in_service = true;
    double cost_a = 0.0;
    double cost_b = 0.0;

    bool operator==(const Generator&) const = default;
};

struct GridCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> gens;
    int ref_bus = 0;

    int n_buses() const { return static_cast<int>(buses.size()); }
    int n_live_branches() const;
    /// Zero-based position of a bus id; throws MalformedBlock for unknown ids.
    int bus_index(int id) const;
    int ref_index() const { return bus_index(ref_bus); }

    bool operator==(const GridCase&) const = default;
};


/// Parse the numeric subset of a MATPOWER case file: baseMVA plus the bus,
/// gen, branch and gencost matrices. Validates every GridCase invariant.
GridCase parse_matpower_case(std::string_view text, std::string name = {});
GridCase load_matpower_case(const std::filesystem::path& path);

/// Bus ids and the endpoints (bus indices) of in-service branches, read
/// without the electrical checks of parse_matpower_case.
struct CaseTopology {
    std::vector<int> bus_ids;
    std::vector<std::pair<int, int>> edges;
};
CaseTopology parse_matpower_topology(std::string_view text);

/// Serialize back to MATPOWER text (physical units, shortest round-trip
/// decimal representation).
std::string write_matpower_case(const GridCase& grid_case);

/// Same case with the given branches (zero-based rows of the branch block)
/// marked out of service. Connectivity is not checked here.
GridCase with_branches_out(GridCase grid_case, const std::vector<int>& branch_rows);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);
/// Strict full-string parse. Returns false on trailing garbage or empty input.
bool parse_double(std::string_view text, double& value);

std::string read_text_file(const std::filesystem::path& path);
/// Write via temporary file + rename so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace gridflow
