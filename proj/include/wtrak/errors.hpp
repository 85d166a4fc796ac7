#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wtrak {

// Every failure the library raises carries one of these codes so callers
// (and the CLI exit-code mapping) can dispatch without parsing messages.
enum class Errc {
  dimension_mismatch,
  singular_covariance,
  non_finite_input,
  negative_input,
  index_out_of_range,
  negative_epsilon,
  non_convergence,
  bad_labels,
  duplicate_points,
  too_few_points,
  mixed_metric,
  mixed_epsilon,
  empty_grid,
  missing_series,
  single_class,
  bad_magic,
  truncated_file,
  non_finite_value,
  bad_spec,
  io_error,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::singular_covariance: return "singular_covariance";
    case Errc::non_finite_input: return "non_finite_input";
    case Errc::negative_input: return "negative_input";
    case Errc::index_out_of_range: return "index_out_of_range";
    case Errc::negative_epsilon: return "negative_epsilon";
    case Errc::non_convergence: return "non_convergence";
    case Errc::bad_labels: return "bad_labels";
    case Errc::duplicate_points: return "duplicate_points";
    case Errc::too_few_points: return "too_few_points";
    case Errc::mixed_metric: return "mixed_metric";
    case Errc::mixed_epsilon: return "mixed_epsilon";
    case Errc::empty_grid: return "empty_grid";
    case Errc::missing_series: return "missing_series";
    case Errc::single_class: return "single_class";
    case Errc::bad_magic: return "bad_magic";
    case Errc::truncated_file: return "truncated_file";
    case Errc::non_finite_value: return "non_finite_value";
    case Errc::bad_spec: return "bad_spec";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) raise(code, what);
}

// Process exit code contract: 0 success, 2 input/validation error,
// 3 numerical failure (optimizer or degenerate covariance).
inline int exit_code_for(Errc c) {
  return (c == Errc::non_convergence || c == Errc::singular_covariance) ? 3 : 2;
}

}  // namespace wtrak
