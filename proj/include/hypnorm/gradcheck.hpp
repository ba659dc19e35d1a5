#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hypnorm/graph.hpp"

namespace hypnorm::ad {

struct CoordinateCheck {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::string input;
  std::vector<CoordinateCheck> coords;
  double max_rel_error = 0.0;
  bool passed = false;
  /// Set when a perturbed evaluation was non-finite or threw.
  std::optional<std::size_t> failed_index;
  std::string message;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  double tolerance = 1e-5;
  /// Denominator floor of the relative error |a - f| / max(|a|, |f|, floor).
  double floor = 1e-3;
  ForwardOptions forward{};
};

/// Compares the reverse-mode gradient of the scalar node `seed` with respect
/// to the trainable input `input` against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps), one coordinate at a time.
GradCheckReport finite_diff_check(const Graph& graph, const Bindings& bindings, NodeId seed,
                                  const std::string& input, const GradCheckOptions& options = {});

/// Runs finite_diff_check for every trainable input; passes iff all pass.
std::vector<GradCheckReport> finite_diff_check_all(const Graph& graph, const Bindings& bindings, NodeId seed,
                                                   const GradCheckOptions& options = {});

}  // namespace hypnorm::ad
