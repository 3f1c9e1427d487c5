#pragma once

#include <stdexcept>
#include <string>

namespace nirom {

// Numeric values are mirrored by nirom_status in the C header.
enum class ErrorCode : int {
  ok = 0,
  io = 1,
  corrupt_header = 2,
  dimension_mismatch = 3,
  non_monotone_times = 4,
  non_finite = 5,
  empty_set = 6,
  invalid_argument = 7,
  degenerate = 8,
  out_of_range = 9,
  singular = 10,
  not_converged = 11,
  step_underflow = 12,
  max_steps = 13,
  stale_cache = 14,
  incompatible = 15,
  diverged = 16,
  config = 17,
  internal = 18,
};

const char* error_code_name(ErrorCode code) noexcept;

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

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace nirom
