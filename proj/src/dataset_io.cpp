#include "gridflow/dataset_io.hpp"

#include <cmath>
#include <sstream>

#include "gridflow/case_io.hpp"
#include "gridflow/error.hpp"

namespace gridflow {

int DatasetHeader::channel_width(const std::string& label) const
{
    return label == kBindingChannel ? n_lines : n_buses;
}

int DatasetHeader::label_width() const
{
    int width = 0;
    for (const auto& name : label_names) width += channel_width(name);
    return width;
}

int DatasetHeader::label_offset(const std::string& label) const
{
    int offset = 0;
    for (const auto& name : label_names) {
        if (name == label) return offset;
        offset += channel_width(name);
    }
    return -1;
}

Eigen::MatrixXd DatasetFile::node_features(int sample) const
{
    const int n = header.n_buses;
    const int d = header.n_features();
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) x(i, c) = features(sample, i * d + c);
    }
    return x;
}

Eigen::RowVectorXd DatasetFile::label(int sample, const std::string& channel) const
{
    int offset = header.label_offset(channel);
    if (offset < 0) throw Error(ErrorCode::MissingChannel, "dataset has no label channel '" + channel + "'");
    return labels.row(sample).segment(offset, header.channel_width(channel));
}

Eigen::MatrixXd DatasetFile::label_block(const std::string& channel) const
{
    int offset = header.label_offset(channel);
    if (offset < 0) throw Error(ErrorCode::MissingChannel, "dataset has no label channel '" + channel + "'");
    return labels.middleCols(offset, header.channel_width(channel));
}

DatasetFile DatasetFile::subset(const std::vector<int>& rows) const
{
    DatasetFile out;
    out.header = header;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.labels.resize(static_cast<Eigen::Index>(rows.size()), labels.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.features.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
        out.labels.row(static_cast<Eigen::Index>(r)) = labels.row(rows[r]);
    }
    return out;
}

bool operator==(const DatasetFile& a, const DatasetFile& b)
{
    return a.header == b.header && a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.labels.rows() == b.labels.rows() && a.labels.cols() == b.labels.cols() && a.features == b.features &&
           a.labels == b.labels;
}

namespace {

nlohmann::json header_to_json(const DatasetHeader& h)
{
    return nlohmann::json{{"format", "gridflow-dataset"},
                          {"version", 1},
                          {"case_name", h.case_name},
                          {"n_buses", h.n_buses},
                          {"n_lines", h.n_lines},
                          {"feature_names", h.feature_names},
                          {"label_names", h.label_names},
                          {"seed", h.seed},
                          {"metadata", h.metadata}};
}

DatasetHeader header_from_json(const nlohmann::json& j)
{
    DatasetHeader h;
    try {
        if (j.at("format").get<std::string>() != "gridflow-dataset" || j.at("version").get<int>() != 1) {
            throw Error(ErrorCode::HeaderMismatch, "unrecognised dataset format/version");
        }
        h.case_name = j.at("case_name").get<std::string>();
        h.n_buses = j.at("n_buses").get<int>();
        h.n_lines = j.at("n_lines").get<int>();
        h.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        h.label_names = j.at("label_names").get<std::vector<std::string>>();
        h.seed = j.at("seed").get<std::uint64_t>();
        h.metadata = j.value("metadata", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::HeaderMismatch, std::string("bad dataset header: ") + e.what());
    }
    if (h.n_buses <= 0 || h.n_lines < 0) throw Error(ErrorCode::HeaderMismatch, "bad dataset dimensions");
    return h;
}

std::string column_names(const DatasetHeader& h)
{
    std::string out;
    auto add = [&](const std::string& name) {
        if (!out.empty()) out.push_back(',');
        out += name;
    };
    for (int i = 0; i < h.n_buses; ++i) {
        for (const auto& f : h.feature_names) add("x" + std::to_string(i) + "_" + f);
    }
    for (const auto& label : h.label_names) {
        for (int i = 0; i < h.channel_width(label); ++i) add(label + "_" + std::to_string(i));
    }
    return out;
}

void check_shapes(const DatasetFile& d)
{
    const auto& h = d.header;
    if (d.features.rows() != d.labels.rows()) throw Error(ErrorCode::HeaderMismatch, "feature/label row counts differ");
    if (d.features.cols() != h.feature_width()) {
        throw Error(ErrorCode::HeaderMismatch, "feature width " + std::to_string(d.features.cols()) +
                                                   " != n_buses x n_features = " + std::to_string(h.feature_width()));
    }
    if (d.labels.cols() != h.label_width()) {
        throw Error(ErrorCode::HeaderMismatch, "label width " + std::to_string(d.labels.cols()) +
                                                   " != header label width " + std::to_string(h.label_width()));
    }
}

}  // namespace

std::string serialize_dataset(const DatasetFile& d)
{
    check_shapes(d);
    if (!d.features.allFinite() || !d.labels.allFinite()) {
        throw Error(ErrorCode::NonFiniteValue, "dataset contains NaN or infinite values");
    }
    std::string out = "# " + header_to_json(d.header).dump() + "\n";
    out += column_names(d.header);
    out += '\n';
    out.reserve(out.size() + static_cast<std::size_t>(d.n_samples()) * (d.features.cols() + d.labels.cols()) * 12);
    for (int r = 0; r < d.n_samples(); ++r) {
        for (Eigen::Index c = 0; c < d.features.cols(); ++c) {
            if (c > 0) out.push_back(',');
            out += format_double(d.features(r, c));
        }
        for (Eigen::Index c = 0; c < d.labels.cols(); ++c) {
            out.push_back(',');
            out += format_double(d.labels(r, c));
        }
        out.push_back('\n');
    }
    return out;
}

DatasetFile parse_dataset(const std::string& text)
{
    std::size_t first_nl = text.find('\n');
    if (text.rfind("# ", 0) != 0 || first_nl == std::string::npos) {
        throw Error(ErrorCode::HeaderMismatch, "missing '# {json}' header line");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.substr(2, first_nl - 2));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::HeaderMismatch, std::string("header is not JSON: ") + e.what());
    }
    DatasetFile d;
    d.header = header_from_json(j);
    const int fw = d.header.feature_width();
    const int lw = d.header.label_width();

    std::size_t pos = first_nl + 1;
    std::size_t second_nl = text.find('\n', pos);
    if (second_nl == std::string::npos) throw Error(ErrorCode::HeaderMismatch, "missing column-name line");
    if (text.compare(pos, second_nl - pos, column_names(d.header)) != 0) {
        throw Error(ErrorCode::HeaderMismatch, "column names do not match header");
    }
    pos = second_nl + 1;

    std::vector<double> values;
    int rows = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        int count = 0;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string_view token = line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                                        : comma - start);
            double v = 0.0;
            if (!parse_double(token, v)) {
                if (token == "nan" || token == "inf" || token == "-inf" || token == "-nan") {
                    throw Error(ErrorCode::NonFiniteValue, "row " + std::to_string(rows + 1));
                }
                throw Error(ErrorCode::HeaderMismatch,
                            "row " + std::to_string(rows + 1) + ": bad value '" + std::string(token) + "'");
            }
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "row " + std::to_string(rows + 1));
            values.push_back(v);
            ++count;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (count != fw + lw) {
            throw Error(ErrorCode::HeaderMismatch, "row " + std::to_string(rows + 1) + " has " +
                                                       std::to_string(count) + " values, expected " +
                                                       std::to_string(fw + lw));
        }
        ++rows;
    }
    d.features.resize(rows, fw);
    d.labels.resize(rows, lw);
    for (int r = 0; r < rows; ++r) {
        const double* row = values.data() + static_cast<std::size_t>(r) * (fw + lw);
        for (int c = 0; c < fw; ++c) d.features(r, c) = row[c];
        for (int c = 0; c < lw; ++c) d.labels(r, c) = row[fw + c];
    }
    return d;
}

void write_dataset(const std::filesystem::path& path, const DatasetFile& data)
{
    write_file_atomic(path, serialize_dataset(data));
}

DatasetFile read_dataset(const std::filesystem::path& path)
{
    return parse_dataset(read_text_file(path));
}

}  // namespace gridflow
