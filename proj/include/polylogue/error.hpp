#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polylogue {

enum class ErrorCode {
  format,             // bad magic, malformed JSON/CSV
  dimension,          // shape mismatch between declared and actual sizes
  incomplete_bundle,  // missing member file
  consistency,        // fields disagree with each other
  validation,         // a value violates a type invariant
  degenerate_trace,   // empty post-marker span
  degenerate_persona, // projection against a (near) zero direction
  degenerate_label,   // single-class labels
  insufficient_data,  // too few rows / samples
  empty_input,
  config,
  no_valid_config,
  numeric,            // non-finite values, solver failure
  io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace polylogue
