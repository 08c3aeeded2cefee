#include "gridflow/error.hpp"

#include <sstream>

namespace gridflow {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::MalformedBlock: return "MalformedBlock";
    case ErrorCode::UnsupportedCost: return "UnsupportedCost";
    case ErrorCode::DisconnectedCase: return "DisconnectedCase";
    case ErrorCode::NoRefBus: return "NoRefBus";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::SingularB: return "SingularB";
    case ErrorCode::WouldDisconnect: return "WouldDisconnect";
    case ErrorCode::BridgeLine: return "BridgeLine";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotOrthonormal: return "NotOrthonormal";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::TooManyRejections: return "TooManyRejections";
    case ErrorCode::GraphNotRecorded: return "GraphNotRecorded";
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::NoBindingEvents: return "NoBindingEvents";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorCode::BadConfig: return "BadConfig";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
{
}

namespace {

std::string describe_islands(const std::vector<std::vector<int>>& islands)
{
    std::ostringstream out;
    out << islands.size() << " islands:";
    for (const auto& island : islands) {
        out << " {";
        for (std::size_t i = 0; i < island.size(); ++i) {
            if (i > 0) out << ',';
            if (i == 8 && island.size() > 10) {
                out << "... (" << island.size() << " buses)";
                break;
            }
            out << island[i];
        }
        out << '}';
    }
    return out.str();
}

}  // namespace

IslandError::IslandError(ErrorCode code, std::vector<std::vector<int>> islands)
    : Error(code, describe_islands(islands)), islands_(std::move(islands))
{
}

}  // namespace gridflow
