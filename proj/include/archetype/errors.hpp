#pragma once

#include <stdexcept>
#include <string>

namespace archetype {

/// Failure categories surfaced by the library.
///
/// `parse` and `config` indicate bad inputs and abort a run before any work
/// starts.  The remaining codes can occur per column while a run is in
/// flight; callers that process many columns catch them, record the failure
/// on the affected prediction, and keep going.
enum class ErrorCode {
  parse,
  config,
  degenerate_column,
  window_too_small,
  empty_eval,
  backend_unreachable,
  backend_timeout,
  backend_rejected,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::config: return "config";
    case ErrorCode::degenerate_column: return "degenerate_column";
    case ErrorCode::window_too_small: return "window_too_small";
    case ErrorCode::empty_eval: return "empty_eval";
    case ErrorCode::backend_unreachable: return "backend_unreachable";
    case ErrorCode::backend_timeout: return "backend_timeout";
    case ErrorCode::backend_rejected: return "backend_rejected";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace archetype
