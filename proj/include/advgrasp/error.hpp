#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace advgrasp {

enum class ErrorCode {
  INVALID_SHAPE,
  NOT_GRASPED,
  NO_VALID_GRASPS,
  OUT_OF_FRAME,
  OUT_OF_BOUNDS,
  SHAPE_MISMATCH,
  IO,
  PARSE,
  PRECONDITION_VIOLATION,
  CHANNEL_CLOSED,
  TIMEOUT,
  VERSION_MISMATCH,
  BIND_FAILURE,
  INVALID_CONFIG,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::INVALID_SHAPE: return "INVALID_SHAPE";
    case ErrorCode::NOT_GRASPED: return "NOT_GRASPED";
    case ErrorCode::NO_VALID_GRASPS: return "NO_VALID_GRASPS";
    case ErrorCode::OUT_OF_FRAME: return "OUT_OF_FRAME";
    case ErrorCode::OUT_OF_BOUNDS: return "OUT_OF_BOUNDS";
    case ErrorCode::SHAPE_MISMATCH: return "SHAPE_MISMATCH";
    case ErrorCode::IO: return "IO";
    case ErrorCode::PARSE: return "PARSE";
    case ErrorCode::PRECONDITION_VIOLATION: return "PRECONDITION_VIOLATION";
    case ErrorCode::CHANNEL_CLOSED: return "CHANNEL_CLOSED";
    case ErrorCode::TIMEOUT: return "TIMEOUT";
    case ErrorCode::VERSION_MISMATCH: return "VERSION_MISMATCH";
    case ErrorCode::BIND_FAILURE: return "BIND_FAILURE";
    case ErrorCode::INVALID_CONFIG: return "INVALID_CONFIG";
  }
  return "UNKNOWN";
}

// Every failure in the library surfaces as an Error carrying a stable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace advgrasp
