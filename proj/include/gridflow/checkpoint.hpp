#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace gridflow {

/// Self-describing single-file container: an 8-byte magic, a little-endian
/// uint64 manifest length, the JSON manifest, then every array as raw
/// little-endian float64 values (column-major) in manifest order.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    struct Array {
        std::string name;
        Eigen::MatrixXd values;
    };

    /// Model-level metadata: kind, shapes, hyper-parameters, mask indices.
    nlohmann::json manifest = nlohmann::json::object();
    std::vector<Array> arrays;

    void add(std::string name, Eigen::MatrixXd values);
    const Eigen::MatrixXd& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace gridflow
