#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qcollapse {

enum class ErrorCode {
  invalid_range,
  too_few_points,
  packet_clipped,
  weight_mismatch,
  linear_solve_failure,
  ramp_underresolved,
  ramp_outside_domain,
  empty_branch,
  no_root_in_bracket,
  solver_nonconvergence,
  grid_too_large,
  resource_guard,
  unknown_preset,
  invalid_config,
  io_error,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_range: return "invalid-range";
    case ErrorCode::too_few_points: return "too-few-points";
    case ErrorCode::packet_clipped: return "packet-clipped-by-boundary";
    case ErrorCode::weight_mismatch: return "weight-mismatch";
    case ErrorCode::linear_solve_failure: return "linear-solve-failure";
    case ErrorCode::ramp_underresolved: return "ramp-underresolved";
    case ErrorCode::ramp_outside_domain: return "ramp-outside-domain";
    case ErrorCode::empty_branch: return "empty-branch";
    case ErrorCode::no_root_in_bracket: return "no-root-in-bracket";
    case ErrorCode::solver_nonconvergence: return "solver-nonconvergence";
    case ErrorCode::grid_too_large: return "grid-too-large";
    case ErrorCode::resource_guard: return "resource-guard-violation";
    case ErrorCode::unknown_preset: return "unknown-id";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

/// Exception carrying a stable, machine-readable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qcollapse
