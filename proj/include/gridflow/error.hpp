#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridflow {

enum class ErrorCode {
    // case_io
    MalformedBlock,
    UnsupportedCost,
    DisconnectedCase,
    NoRefBus,
    HeaderMismatch,
    NonFiniteValue,
    VersionMismatch,
    ShapeMismatch,
    Io,
    // grid_model
    Disconnected,
    SingularB,
    WouldDisconnect,
    BridgeLine,
    // spectral
    NotSymmetric,
    NotPositiveDefinite,
    NoConvergence,
    NotOrthonormal,
    DegenerateSpectrum,
    // opf
    Infeasible,
    MaxIterations,
    TooManyRejections,
    // nn
    GraphNotRecorded,
    MissingChannel,
    // experiments
    DimensionMismatch,
    Diverged,
    EmptyTestSet,
    NoBindingEvents,
    // cli
    UnknownSubcommand,
    BadConfig,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised when removing lines (or parsing a case) leaves more than one island.
/// Islands are lists of zero-based bus indices.
class IslandError : public Error {
public:
    IslandError(ErrorCode code, std::vector<std::vector<int>> islands);

    const std::vector<std::vector<int>>& islands() const noexcept { return islands_; }

private:
    std::vector<std::vector<int>> islands_;
};

}  // namespace gridflow
