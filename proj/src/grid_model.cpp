#include "gridflow/grid_model.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "gridflow/error.hpp"

namespace gridflow {

GraphMask::GraphMask(int n, const std::vector<std::pair<int, int>>& edges)
    : n_(n), dense_(static_cast<std::size_t>(n) * n, 0)
{
    auto mark = [&](int i, int j) { dense_[static_cast<std::size_t>(i) * n_ + j] = 1; };
    for (int i = 0; i < n; ++i) mark(i, i);
    for (auto [i, j] : edges) {
        mark(i, j);
        mark(j, i);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (contains(i, j)) entries_.emplace_back(i, j);
        }
    }
}

Eigen::MatrixXd GraphMask::as_matrix() const
{
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
    for (auto [i, j] : entries_) m(i, j) = 1.0;
    return m;
}

Eigen::MatrixXd GridLinAlg::full_incidence() const
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_lines(), n_buses);
    for (int k = 0; k < n_lines(); ++k) {
        a(k, lines[k].from) = 1.0;
        a(k, lines[k].to) = -1.0;
    }
    return a;
}

Eigen::VectorXd GridLinAlg::limits() const
{
    Eigen::VectorXd f(n_lines());
    for (int k = 0; k < n_lines(); ++k) f(k) = lines[k].limit;
    return f;
}

Eigen::VectorXd GridLinAlg::reduce(const Eigen::VectorXd& full) const
{
    Eigen::VectorXd r(n_buses - 1);
    for (int i = 0; i < n_buses; ++i) {
        if (i != ref_index) r(reduced_index(i)) = full(i);
    }
    return r;
}

Eigen::VectorXd GridLinAlg::expand(const Eigen::VectorXd& reduced) const
{
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n_buses);
    for (int i = 0; i < n_buses; ++i) {
        if (i != ref_index) full(i) = reduced(reduced_index(i));
    }
    return full;
}

Eigen::VectorXd GridLinAlg::solve(const Eigen::VectorXd& rhs) const
{
    return factor->solve(rhs);
}

namespace {

std::vector<std::vector<int>> components(int n, const std::vector<Line>& lines, const std::vector<char>& removed)
{
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (std::size_t k = 0; k < lines.size(); ++k) {
        if (!removed.empty() && removed[k]) continue;
        int a = find(lines[k].from);
        int b = find(lines[k].to);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<std::vector<int>> islands;
    std::vector<int> slot(n, -1);
    for (int v = 0; v < n; ++v) {
        int root = find(v);
        if (slot[root] < 0) {
            slot[root] = static_cast<int>(islands.size());
            islands.emplace_back();
        }
        islands[slot[root]].push_back(v);
    }
    return islands;
}

}  // namespace

GridLinAlg build_linalg(int n_buses, int ref_index, std::vector<int> bus_ids, std::vector<Line> lines)
{
    auto islands = components(n_buses, lines, {});
    if (islands.size() > 1) throw IslandError(ErrorCode::Disconnected, std::move(islands));

    GridLinAlg g;
    g.n_buses = n_buses;
    g.ref_index = ref_index;
    g.bus_ids = std::move(bus_ids);
    g.lines = std::move(lines);
    const int n = n_buses;
    const int m = n - 1;
    const int nl = g.n_lines();

    g.incidence = Eigen::MatrixXd::Zero(nl, m);
    g.reactance.resize(nl);
    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<std::pair<int, int>> edges;
    for (int k = 0; k < nl; ++k) {
        const Line& line = g.lines[k];
        g.reactance(k) = line.reactance;
        int rf = g.reduced_index(line.from);
        int rt = g.reduced_index(line.to);
        if (rf >= 0) g.incidence(k, rf) = 1.0;
        if (rt >= 0) g.incidence(k, rt) = -1.0;
        const double y = 1.0 / line.reactance;
        if (rf >= 0) triplets.emplace_back(rf, rf, y);
        if (rt >= 0) triplets.emplace_back(rt, rt, y);
        if (rf >= 0 && rt >= 0) {
            triplets.emplace_back(rf, rt, -y);
            triplets.emplace_back(rt, rf, -y);
        }
        edges.emplace_back(line.from, line.to);
    }
    Eigen::SparseMatrix<double> b_sparse(m, m);
    b_sparse.setFromTriplets(triplets.begin(), triplets.end());
    g.b_reduced = Eigen::MatrixXd(b_sparse);

    auto factor = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>(b_sparse);
    if (factor->info() != Eigen::Success) throw Error(ErrorCode::SingularB, "B-bus factorization failed");
    g.factor = factor;

    Eigen::LLT<Eigen::MatrixXd> dense(g.b_reduced);
    if (dense.info() != Eigen::Success) throw Error(ErrorCode::SingularB, "B-bus is not positive definite");
    g.b_inv = dense.solve(Eigen::MatrixXd::Identity(m, m));
    g.b_inv = 0.5 * (g.b_inv + g.b_inv.transpose()).eval();

    // S = X^-1 A B^-1, then re-insert the reference column as zeros.
    Eigen::MatrixXd s_reduced = g.reactance.cwiseInverse().asDiagonal() * g.incidence * g.b_inv;
    g.isf = Eigen::MatrixXd::Zero(nl, n);
    for (int i = 0; i < n; ++i) {
        if (i != ref_index) g.isf.col(i) = s_reduced.col(g.reduced_index(i));
    }
    g.mask = GraphMask(n, edges);
    return g;
}

GridLinAlg build_linalg(const GridCase& c)
{
    std::vector<int> ids;
    ids.reserve(c.buses.size());
    for (const auto& b : c.buses) ids.push_back(b.id);
    std::vector<Line> lines;
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        if (!br.in_service) continue;
        lines.push_back({static_cast<int>(k), c.bus_index(br.from), c.bus_index(br.to), br.x, br.admittance, br.rate_a});
    }
    return build_linalg(c.n_buses(), c.ref_index(), std::move(ids), std::move(lines));
}

std::vector<std::vector<int>> islands_without(const GridLinAlg& grid, const std::vector<int>& out)
{
    std::vector<char> removed(grid.lines.size(), 0);
    for (int k : out) removed.at(k) = 1;
    return components(grid.n_buses, grid.lines, removed);
}

Contingency apply_outage(const GridLinAlg& grid, const std::vector<int>& out)
{
    std::set<int> unique(out.begin(), out.end());
    for (int k : unique) {
        if (k < 0 || k >= grid.n_lines()) {
            throw Error(ErrorCode::DimensionMismatch, "line " + std::to_string(k) + " is not a live line");
        }
    }
    std::vector<int> outaged(unique.begin(), unique.end());
    auto islands = islands_without(grid, outaged);
    if (islands.size() > 1) throw IslandError(ErrorCode::WouldDisconnect, std::move(islands));

    Contingency c;
    c.outaged_lines = outaged;
    std::vector<Line> kept;
    for (int k = 0; k < grid.n_lines(); ++k) {
        if (unique.count(k)) continue;
        kept.push_back(grid.lines[k]);
        c.surviving.push_back(k);
    }
    c.post_grid = build_linalg(grid.n_buses, grid.ref_index, grid.bus_ids, std::move(kept));
    return c;
}

RankOneUpdate sherman_morrison(const Eigen::MatrixXd& inverse, const Eigen::VectorXd& a, double reactance, int sign)
{
    const Eigen::VectorXd w = inverse * a;
    const double quad = a.dot(w);
    RankOneUpdate u;
    if (sign < 0) {
        u.denominator = reactance - quad;
        if (u.denominator <= kBridgeTolerance) {
            throw Error(ErrorCode::BridgeLine, "removing the branch would island the network");
        }
        u.delta = (w * w.transpose()) / u.denominator;
    } else {
        u.denominator = reactance + quad;
        u.delta = -(w * w.transpose()) / u.denominator;
    }
    u.updated_inverse = inverse + u.delta;
    return u;
}

RankOneUpdate rank_one_inverse_update(const GridLinAlg& grid, int line)
{
    if (line < 0 || line >= grid.n_lines()) {
        throw Error(ErrorCode::DimensionMismatch, "line " + std::to_string(line) + " is not a live line");
    }
    return sherman_morrison(grid.b_inv, grid.incidence.row(line).transpose(), grid.reactance(line), -1);
}

const GraphMask& gnn_mask(const GridLinAlg& grid)
{
    return grid.mask;
}

Eigen::VectorXd fdpf_voltage_sensitivity(const GridLinAlg& grid, const Eigen::VectorXd& dq)
{
    if (dq.size() != grid.n_buses - 1) {
        throw Error(ErrorCode::DimensionMismatch, "reactive deviation must cover the non-reference buses");
    }
    return -(grid.b_inv * dq);
}

}  // namespace gridflow
