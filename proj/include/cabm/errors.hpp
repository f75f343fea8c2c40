#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cabm {

enum class ErrorCode {
  domain,
  shape,
  non_positive_derivative,
  singular_jacobian,
  degenerate_degree,
  degenerate_design,
  binary_family_nonbinary_weights,
  max_iterations,
  not_converged,
  index,
  too_many_failures,
  parse,
  duplicate_pair,
  negative_weight,
  unknown_map,
  io,
  config,
};

/// Machine-readable name used in CLI reports, e.g. "degenerate_degree".
constexpr std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::domain: return "domain_error";
    case ErrorCode::shape: return "shape_error";
    case ErrorCode::non_positive_derivative: return "non_positive_derivative";
    case ErrorCode::singular_jacobian: return "singular_jacobian";
    case ErrorCode::degenerate_degree: return "degenerate_degree";
    case ErrorCode::degenerate_design: return "degenerate_design";
    case ErrorCode::binary_family_nonbinary_weights: return "binary_family_nonbinary_weights";
    case ErrorCode::max_iterations: return "max_iterations";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::index: return "index_error";
    case ErrorCode::too_many_failures: return "too_many_failures";
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::duplicate_pair: return "duplicate_pair";
    case ErrorCode::negative_weight: return "negative_weight";
    case ErrorCode::unknown_map: return "unknown_map";
    case ErrorCode::io: return "io_error";
    case ErrorCode::config: return "config_error";
  }
  return "unknown";
}

/// True for failures of the estimation itself (as opposed to bad input files).
constexpr bool is_estimation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::non_positive_derivative:
    case ErrorCode::singular_jacobian:
    case ErrorCode::degenerate_degree:
    case ErrorCode::degenerate_design:
    case ErrorCode::binary_family_nonbinary_weights:
    case ErrorCode::max_iterations:
    case ErrorCode::not_converged:
    case ErrorCode::domain:
    case ErrorCode::shape:
    case ErrorCode::index:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cabm
