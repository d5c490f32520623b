#include "core/error.hpp"

namespace esi {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::MeshDisconnected: return "MeshDisconnected";
    case ErrorCode::DegenerateElement: return "DegenerateElement";
    case ErrorCode::AreaUnreachable: return "AreaUnreachable";
    case ErrorCode::SingularGeometry: return "SingularGeometry";
    case ErrorCode::InvalidLeadField: return "InvalidLeadField";
    case ErrorCode::ZeroSignal: return "ZeroSignal";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::ArchitectureError: return "ArchitectureError";
    case ErrorCode::DivergenceError: return "DivergenceError";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::UndefinedMetric: return "UndefinedMetric";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::ZeroEstimate: return "ZeroEstimate";
    case ErrorCode::NoDetection: return "NoDetection";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::EmptyReport: return "EmptyReport";
  }
  return "UnknownError";
}

}  // namespace esi
