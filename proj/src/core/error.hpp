#pragma once

#include <stdexcept>
#include <string>

namespace esi {

enum class ErrorCode {
  InvalidArgument,
  Io,
  FormatError,
  ShapeError,
  MeshDisconnected,
  DegenerateElement,
  AreaUnreachable,
  SingularGeometry,
  InvalidLeadField,
  ZeroSignal,
  RankDeficient,
  PlacementFailure,
  BatchTooSmall,
  NonFiniteGradient,
  ArchitectureError,
  DivergenceError,
  NumericalFailure,
  UndefinedMetric,
  DegenerateInput,
  ZeroReference,
  ZeroEstimate,
  NoDetection,
  ConfigError,
  EmptyReport,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace esi
