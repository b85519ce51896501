#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace locreward {

enum class ErrorCode {
  invalid_box,
  space_mismatch,
  invalid_config,
  group_too_small,
  length_mismatch,
  non_finite_input,
  unknown_style,
  malformed_request,
  io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_box: return "invalid-box";
    case ErrorCode::space_mismatch: return "space-mismatch";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::group_too_small: return "group-too-small";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::non_finite_input: return "non-finite-input";
    case ErrorCode::unknown_style: return "unknown-style";
    case ErrorCode::malformed_request: return "malformed-request";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

/// Every recoverable failure in the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace locreward
