#include "gridflow/case_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <fstream>
#include <numeric>
#include <sstream>
#include <system_error>

#include "gridflow/error.hpp"

namespace gridflow {

namespace {

using Row = std::vector<double>;
using Block = std::vector<Row>;

constexpr std::size_t kBusCols = 13;
constexpr std::size_t kGenCols = 10;
constexpr std::size_t kBranchCols = 11;

std::string strip_comments(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    bool in_comment = false;
    bool in_string = false;
    for (char c : text) {
        if (c == '\n') {
            in_comment = false;
            in_string = false;
            out.push_back(c);
            continue;
        }
        if (in_comment) continue;
        if (c == '\'') in_string = !in_string;
        if (c == '%' && !in_string) {
            in_comment = true;
            continue;
        }
        out.push_back(c);
    }
    return out;
}

std::size_t find_assignment(const std::string& text, std::string_view field)
{
    const std::string key = "mpc." + std::string(field);
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        std::size_t after = pos + key.size();
        // reject prefixes such as mpc.gen matching mpc.gencost
        if (after < text.size() && (std::isalnum(static_cast<unsigned char>(text[after])) || text[after] == '_')) {
            pos = after;
            continue;
        }
        while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
        if (after < text.size() && text[after] == '=') return after + 1;
        pos = after;
    }
    return std::string::npos;
}

double parse_number_token(std::string_view token, std::string_view context)
{
    double value = 0.0;
    if (!parse_double(token, value) || !std::isfinite(value)) {
        throw Error(ErrorCode::MalformedBlock,
                    std::string(context) + ": bad numeric token '" + std::string(token) + "'");
    }
    return value;
}

Block parse_matrix_block(const std::string& text, std::string_view field)
{
    std::size_t pos = find_assignment(text, field);
    if (pos == std::string::npos) {
        throw Error(ErrorCode::MalformedBlock, "missing block mpc." + std::string(field));
    }
    std::size_t open = text.find('[', pos);
    if (open == std::string::npos) {
        throw Error(ErrorCode::MalformedBlock, "mpc." + std::string(field) + " is not a matrix");
    }
    std::size_t close = text.find(']', open);
    if (close == std::string::npos) {
        throw Error(ErrorCode::MalformedBlock, "unterminated block mpc." + std::string(field));
    }

    Block block;
    Row current;
    auto flush = [&] {
        if (!current.empty()) block.push_back(std::move(current));
        current.clear();
    };
    std::size_t i = open + 1;
    while (i < close) {
        char c = text[i];
        if (c == ';' || c == '\n') {
            flush();
            ++i;
        } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            ++i;
        } else {
            std::size_t j = i;
            while (j < close && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != ';' &&
                   text[j] != ',') {
                ++j;
            }
            current.push_back(parse_number_token(std::string_view(text).substr(i, j - i), field));
            i = j;
        }
    }
    flush();

    if (block.empty()) {
        throw Error(ErrorCode::MalformedBlock, "empty block mpc." + std::string(field));
    }
    for (const auto& row : block) {
        if (row.size() != block.front().size()) {
            throw Error(ErrorCode::MalformedBlock, "ragged rows in mpc." + std::string(field));
        }
    }
    return block;
}

double parse_scalar(const std::string& text, std::string_view field)
{
    std::size_t pos = find_assignment(text, field);
    if (pos == std::string::npos) {
        throw Error(ErrorCode::MalformedBlock, "missing mpc." + std::string(field));
    }
    std::size_t end = text.find(';', pos);
    std::size_t nl = text.find('\n', pos);
    end = std::min(end, nl);
    std::string token(text.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
    token.erase(std::remove_if(token.begin(), token.end(), [](unsigned char c) { return std::isspace(c); }),
                token.end());
    return parse_number_token(token, field);
}

void require_columns(const Block& block, std::size_t cols, std::string_view field)
{
    if (block.front().size() < cols) {
        throw Error(ErrorCode::MalformedBlock, "mpc." + std::string(field) + " needs at least " +
                                                   std::to_string(cols) + " columns");
    }
}

int as_int(double v, std::string_view what)
{
    double r = std::round(v);
    if (std::abs(r - v) > 0.0) {
        throw Error(ErrorCode::MalformedBlock, std::string(what) + " must be an integer");
    }
    return static_cast<int>(r);
}

std::vector<std::vector<int>> live_islands(const GridCase& c)
{
    const int n = c.n_buses();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (const auto& br : c.branches) {
        if (!br.in_service) continue;
        int a = find(c.bus_index(br.from));
        int b = find(c.bus_index(br.to));
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

void validate(const GridCase& c)
{
    int refs = 0;
    for (const auto& bus : c.buses) {
        if (bus.type == BusType::Ref) ++refs;
    }
    if (refs == 0) throw Error(ErrorCode::NoRefBus, "no bus of type 3");
    if (refs > 1) throw Error(ErrorCode::NoRefBus, "more than one bus of type 3");

    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        c.bus_index(br.from);
        c.bus_index(br.to);
        if (br.from == br.to) {
            throw Error(ErrorCode::MalformedBlock, "branch " + std::to_string(k + 1) + " is a self-loop");
        }
        if (!(br.x > 0.0)) {
            throw Error(ErrorCode::MalformedBlock,
                        "branch " + std::to_string(k + 1) + " has non-positive reactance");
        }
        if (br.in_service && !(br.rate_a > 0.0)) {
            throw Error(ErrorCode::MalformedBlock,
                        "branch " + std::to_string(k + 1) + " has no positive rateA limit");
        }
    }
    for (std::size_t g = 0; g < c.gens.size(); ++g) {
        c.bus_index(c.gens[g].bus);
        if (c.gens[g].pmin > c.gens[g].pmax) {
            throw Error(ErrorCode::MalformedBlock, "generator " + std::to_string(g + 1) + " has Pmin > Pmax");
        }
    }
    auto islands = live_islands(c);
    if (islands.size() > 1) throw IslandError(ErrorCode::DisconnectedCase, std::move(islands));
}

}  // namespace

int GridCase::n_live_branches() const
{
    return static_cast<int>(std::count_if(branches.begin(), branches.end(),
                                          [](const Branch& b) { return b.in_service; }));
}

int GridCase::bus_index(int id) const
{
    // Case files list buses in arbitrary id order; a linear scan is fine at these sizes
    // but the common contiguous layout is checked first.
    if (id >= 1 && id <= n_buses() && buses[id - 1].id == id) return id - 1;
    for (int i = 0; i < n_buses(); ++i) {
        if (buses[i].id == id) return i;
    }
    throw Error(ErrorCode::MalformedBlock, "reference to undeclared bus " + std::to_string(id));
}

GridCase parse_matpower_case(std::string_view raw, std::string name)
{
    const std::string text = strip_comments(raw);
    GridCase c;
    c.name = std::move(name);
    c.base_mva = parse_scalar(text, "baseMVA");
    if (!(c.base_mva > 0.0)) throw Error(ErrorCode::MalformedBlock, "baseMVA must be positive");
    const double base = c.base_mva;

    Block bus = parse_matrix_block(text, "bus");
    Block gen = parse_matrix_block(text, "gen");
    Block branch = parse_matrix_block(text, "branch");
    Block gencost = parse_matrix_block(text, "gencost");
    require_columns(bus, kBusCols, "bus");
    require_columns(gen, kGenCols, "gen");
    require_columns(branch, kBranchCols, "branch");
    require_columns(gencost, 4, "gencost");

    for (const auto& row : bus) {
        Bus b;
        b.id = as_int(row[0], "bus id");
        int type = as_int(row[1], "bus type");
        if (type < 1 || type > 4) throw Error(ErrorCode::MalformedBlock, "unknown bus type");
        b.type = static_cast<BusType>(type);
        b.pd = row[2] / base;
        b.qd = row[3] / base;
        b.vmax = row[11];
        b.vmin = row[12];
        c.buses.push_back(b);
    }
    for (const auto& row : branch) {
        Branch br;
        br.from = as_int(row[0], "branch fbus");
        br.to = as_int(row[1], "branch tbus");
        br.r = row[2];
        br.x = row[3];
        br.admittance = 1.0 / std::hypot(br.r, br.x);
        br.rate_a = row[5] / base;
        br.in_service = row[10] != 0.0;
        c.branches.push_back(br);
    }
    if (gencost.size() < gen.size()) {
        throw Error(ErrorCode::MalformedBlock, "gencost has fewer rows than gen");
    }
    for (std::size_t g = 0; g < gen.size(); ++g) {
        const auto& row = gen[g];
        Generator gn;
        gn.bus = as_int(row[0], "gen bus");
        gn.qmax = row[3] / base;
        gn.qmin = row[4] / base;
        gn.in_service = row[7] > 0.0;
        gn.pmax = row[8] / base;
        gn.pmin = row[9] / base;

        const auto& cost = gencost[g];
        int model = as_int(cost[0], "gencost model");
        if (model != 2) {
            throw Error(ErrorCode::UnsupportedCost,
                        "generator " + std::to_string(g + 1) + ": only polynomial (model 2) costs are supported");
        }
        int ncoef = as_int(cost[3], "gencost n");
        if (ncoef < 0 || cost.size() < 4 + static_cast<std::size_t>(ncoef)) {
            throw Error(ErrorCode::MalformedBlock, "gencost row " + std::to_string(g + 1) + " is too short");
        }
        if (ncoef > 3) {
            throw Error(ErrorCode::UnsupportedCost,
                        "generator " + std::to_string(g + 1) + ": polynomial degree above 2");
        }
        // coefficients are listed highest degree first; the constant is dropped
        double a = ncoef == 3 ? cost[4] : 0.0;
        double b = ncoef == 3 ? cost[5] : (ncoef == 2 ? cost[4] : 0.0);
        gn.cost_a = a * base * base;
        gn.cost_b = b * base;
        c.gens.push_back(gn);
    }
    for (const auto& b : c.buses) {
        if (b.type == BusType::Ref) {
            c.ref_bus = b.id;
            break;
        }
    }
    validate(c);
    return c;
}

CaseTopology parse_matpower_topology(std::string_view raw)
{
    const std::string text = strip_comments(raw);
    Block bus = parse_matrix_block(text, "bus");
    Block branch = parse_matrix_block(text, "branch");
    require_columns(bus, kBusCols, "bus");
    require_columns(branch, kBranchCols, "branch");
    CaseTopology t;
    std::map<int, int> index;
    for (const auto& row : bus) {
        const int id = as_int(row[0], "bus id");
        index[id] = static_cast<int>(t.bus_ids.size());
        t.bus_ids.push_back(id);
    }
    auto at = [&](double v, const char* what) {
        const auto it = index.find(as_int(v, what));
        if (it == index.end()) throw Error(ErrorCode::MalformedBlock, std::string(what) + " is not a declared bus");
        return it->second;
    };
    for (const auto& row : branch) {
        if (row[10] != 0.0) t.edges.emplace_back(at(row[0], "branch fbus"), at(row[1], "branch tbus"));
    }
    return t;
}

GridCase load_matpower_case(const std::filesystem::path& path)
{
    return parse_matpower_case(read_text_file(path), path.stem().string());
}

std::string write_matpower_case(const GridCase& c)
{
    const double base = c.base_mva;
    std::ostringstream out;
    out << "function mpc = " << (c.name.empty() ? std::string("gridflow_case") : c.name) << "\n";
    out << "mpc.version = '2';\n";
    out << "mpc.baseMVA = " << format_double(base) << ";\n\n";
    out << "%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n";
    for (const auto& b : c.buses) {
        out << '\t' << b.id << '\t' << static_cast<int>(b.type) << '\t' << format_double(b.pd * base) << '\t'
            << format_double(b.qd * base) << "\t0\t0\t1\t1\t0\t0\t1\t" << format_double(b.vmax) << '\t'
            << format_double(b.vmin) << ";\n";
    }
    out << "];\n\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n";
    for (const auto& g : c.gens) {
        out << '\t' << g.bus << "\t0\t0\t" << format_double(g.qmax * base) << '\t' << format_double(g.qmin * base)
            << "\t1\t" << format_double(base) << '\t' << (g.in_service ? 1 : 0) << '\t'
            << format_double(g.pmax * base) << '\t' << format_double(g.pmin * base) << ";\n";
    }
    out << "];\n\n%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\nmpc.gencost = [\n";
    for (const auto& g : c.gens) {
        out << "\t2\t0\t0\t3\t" << format_double(g.cost_a / (base * base)) << '\t' << format_double(g.cost_b / base)
            << "\t0;\n";
    }
    out << "];\n\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\nmpc.branch = [\n";
    for (const auto& br : c.branches) {
        std::string rate = format_double(br.rate_a * base);
        out << '\t' << br.from << '\t' << br.to << '\t' << format_double(br.r) << '\t' << format_double(br.x)
            << "\t0\t" << rate << '\t' << rate << '\t' << rate << "\t0\t0\t" << (br.in_service ? 1 : 0) << ";\n";
    }
    out << "];\n";
    return out.str();
}

GridCase with_branches_out(GridCase c, const std::vector<int>& rows)
{
    for (int row : rows) {
        if (row < 0 || row >= static_cast<int>(c.branches.size())) {
            throw Error(ErrorCode::MalformedBlock, "branch row " + std::to_string(row + 1) + " out of range");
        }
        c.branches[row].in_service = false;
    }
    return c;
}

std::string format_double(double value)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double& value)
{
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace gridflow
