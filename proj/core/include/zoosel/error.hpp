#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zoosel {

enum class Errc {
  invalid_argument,
  insufficient_length,
  shape_mismatch,
  non_finite_value,
  degenerate_insample,
  context_too_short,
  model_failure,
  degenerate_oracle,
  version_mismatch,
  malformed_header,
  truncated_file,
  corrupt_payload,
  fingerprint_absent,
  library_drift,
  non_finite_loss,
  non_contiguous_timeline,
  parse_error,
  io_error,
  stage_failure,
};

std::string_view to_string(Errc code) noexcept;

/// All recoverable failures in the library are reported through this type.
/// `code()` is stable and suitable for programmatic dispatch; `what()` carries
/// the human-readable context (task id, model id, file line, ...).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace zoosel
