#include "zoosel/error.hpp"

namespace zoosel {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::insufficient_length: return "insufficient length";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::non_finite_value: return "non-finite value";
    case Errc::degenerate_insample: return "degenerate insample";
    case Errc::context_too_short: return "context too short";
    case Errc::model_failure: return "model failure";
    case Errc::degenerate_oracle: return "degenerate oracle";
    case Errc::version_mismatch: return "version mismatch";
    case Errc::malformed_header: return "malformed header";
    case Errc::truncated_file: return "truncated file";
    case Errc::corrupt_payload: return "corrupt payload";
    case Errc::fingerprint_absent: return "fingerprint absent";
    case Errc::library_drift: return "library/extractor drift";
    case Errc::non_finite_loss: return "non-finite loss";
    case Errc::non_contiguous_timeline: return "non-contiguous timeline";
    case Errc::parse_error: return "parse error";
    case Errc::io_error: return "io error";
    case Errc::stage_failure: return "stage failure";
  }
  return "unknown";
}

}  // namespace zoosel
