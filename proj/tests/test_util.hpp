#pragma once

#include <filesystem>
#include <string>

#include "gridflow/case_io.hpp"

namespace testutil {

inline std::filesystem::path source_path(const std::string& rel)
{
    return std::filesystem::path(GRIDFLOW_SOURCE_DIR) / rel;
}

inline gridflow::GridCase fixture_case(const std::string& name)
{
    return gridflow::load_matpower_case(source_path("tests/fixtures/" + name + ".m"));
}

inline gridflow::GridCase pglib_case(int buses)
{
    return gridflow::load_matpower_case(
        source_path("data/cases/pglib_opf_case" + std::to_string(buses) + "_ieee.m"));
}

inline std::filesystem::path temp_path(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / "gridflow_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace testutil
