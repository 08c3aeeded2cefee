#include "gridflow/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "gridflow/case_io.hpp"
#include "gridflow/error.hpp"

namespace gridflow {

namespace {

constexpr char kMagic[8] = {'G', 'F', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

}  // namespace

void Checkpoint::add(std::string name, Eigen::MatrixXd values)
{
    arrays.push_back({std::move(name), std::move(values)});
}

bool Checkpoint::has(const std::string& name) const
{
    for (const auto& a : arrays) {
        if (a.name == name) return true;
    }
    return false;
}

const Eigen::MatrixXd& Checkpoint::get(const std::string& name) const
{
    for (const auto& a : arrays) {
        if (a.name == name) return a.values;
    }
    throw Error(ErrorCode::ShapeMismatch, "checkpoint has no array '" + name + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt)
{
    nlohmann::json manifest = ckpt.manifest;
    manifest["format_version"] = Checkpoint::kFormatVersion;
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& a : ckpt.arrays) {
        arrays.push_back({{"name", a.name}, {"shape", {a.values.rows(), a.values.cols()}}});
    }
    manifest["arrays"] = arrays;
    const std::string text = manifest.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_u64(out, text.size());
    out += text;
    for (const auto& a : ckpt.arrays) {
        for (Eigen::Index i = 0; i < a.values.size(); ++i) {
            put_u64(out, std::bit_cast<std::uint64_t>(a.values.data()[i]));
        }
    }
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 6) != 0) {
        throw Error(ErrorCode::VersionMismatch, "not a gridflow checkpoint");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw Error(ErrorCode::VersionMismatch, "unsupported checkpoint container revision");
    }
    const std::uint64_t len = get_u64(bytes, 8);
    if (16 + len > bytes.size()) throw Error(ErrorCode::ShapeMismatch, "truncated checkpoint manifest");

    Checkpoint ckpt;
    try {
        ckpt.manifest = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::VersionMismatch, std::string("bad checkpoint manifest: ") + e.what());
    }
    if (ckpt.manifest.value("format_version", -1) != Checkpoint::kFormatVersion) {
        throw Error(ErrorCode::VersionMismatch,
                    "checkpoint format version " + ckpt.manifest.value("format_version", nlohmann::json(-1)).dump() +
                        ", expected " + std::to_string(Checkpoint::kFormatVersion));
    }
    std::size_t pos = 16 + len;
    for (const auto& entry : ckpt.manifest.at("arrays")) {
        const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
        const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
        const std::size_t count = static_cast<std::size_t>(rows * cols);
        if (pos + 8 * count > bytes.size()) throw Error(ErrorCode::ShapeMismatch, "truncated checkpoint arrays");
        Eigen::MatrixXd values(rows, cols);
        for (std::size_t i = 0; i < count; ++i) {
            values.data()[i] = std::bit_cast<double>(get_u64(bytes, pos));
            pos += 8;
        }
        ckpt.arrays.push_back({entry.at("name").get<std::string>(), std::move(values)});
    }
    if (pos != bytes.size()) throw Error(ErrorCode::ShapeMismatch, "trailing bytes after checkpoint arrays");
    ckpt.manifest.erase("arrays");
    ckpt.manifest.erase("format_version");
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    return parse_checkpoint(read_text_file(path));
}

}  // namespace gridflow
