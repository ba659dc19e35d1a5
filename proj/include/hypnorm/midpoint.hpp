#pragma once

#include <array>
#include <vector>

namespace hypnorm::geo {

using Point2 = std::array<double, 2>;

struct MidpointTrial {
  Point2 x{};
  Point2 y{};
  double alpha = 0.0;
  Point2 approx{};
  Point2 ideal{};
  /// Arc length between approx and ideal on the unit circle.
  double error = 0.0;
};

/// Places x and y on the unit circle, `arc_angle` apart and symmetric about
/// the top point (0, 1), which is the ideal midpoint. For each alpha the line
/// through the chord midpoint with direction (sin alpha, cos alpha) is
/// intersected with the arc; alpha = 0 is the perpendicular bisector.
std::vector<MidpointTrial> midpoint_experiment(double arc_angle, const std::vector<double>& alpha_grid);

}  // namespace hypnorm::geo
