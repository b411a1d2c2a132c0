#pragma once

#include <stdexcept>
#include <string>

namespace gcam {

/// Failure categories shared by every module; the C API maps these 1:1 onto
/// its status codes.
enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  Dimension,
  Lookup,
  Contract,
  ArchitectureIncompatible,
  NoSegment,
  AttackFailed,
  Training,
  Protocol,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace gcam
