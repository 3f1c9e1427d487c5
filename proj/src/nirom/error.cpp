#include "nirom/error.hpp"

namespace nirom {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ok: return "ok";
    case ErrorCode::io: return "io";
    case ErrorCode::corrupt_header: return "corrupt_header";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::non_monotone_times: return "non_monotone_times";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::empty_set: return "empty_set";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::singular: return "singular";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::step_underflow: return "step_underflow";
    case ErrorCode::max_steps: return "max_steps";
    case ErrorCode::stale_cache: return "stale_cache";
    case ErrorCode::incompatible: return "incompatible";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::config: return "config";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace nirom
