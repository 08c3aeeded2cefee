#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace gridflow {

/// Label channels are per-bus (width n_buses) except "binding", which has one
/// column per live line.
inline constexpr const char* kBindingChannel = "binding";

struct DatasetHeader {
    std::string case_name;
    int n_buses = 0;
    int n_lines = 0;
    std::vector<std::string> feature_names;
    std::vector<std::string> label_names;
    std::uint64_t seed = 0;
    /// Free-form provenance (sampling ranges, rejections, outages, config hash).
    nlohmann::json metadata = nlohmann::json::object();

    int n_features() const { return static_cast<int>(feature_names.size()); }
    int feature_width() const { return n_buses * n_features(); }
    int channel_width(const std::string& label) const;
    int label_width() const;
    /// Column offset of a label channel inside the label block, or -1.
    int label_offset(const std::string& label) const;
    bool has_label(const std::string& label) const { return label_offset(label) >= 0; }

    bool operator==(const DatasetHeader&) const = default;
};

/// One row per sample. Feature rows are node-major: the d features of bus 0,
/// then bus 1, and so on.
struct DatasetFile {
    DatasetHeader header;
    Eigen::MatrixXd features;
    Eigen::MatrixXd labels;

    int n_samples() const { return static_cast<int>(features.rows()); }
    /// N x d feature matrix of one sample.
    Eigen::MatrixXd node_features(int sample) const;
    /// Row vector slice of one label channel.
    Eigen::RowVectorXd label(int sample, const std::string& channel) const;
    Eigen::MatrixXd label_block(const std::string& channel) const;
    DatasetFile subset(const std::vector<int>& rows) const;
};

bool operator==(const DatasetFile& a, const DatasetFile& b);

std::string serialize_dataset(const DatasetFile& data);
DatasetFile parse_dataset(const std::string& text);

void write_dataset(const std::filesystem::path& path, const DatasetFile& data);
DatasetFile read_dataset(const std::filesystem::path& path);

}  // namespace gridflow
