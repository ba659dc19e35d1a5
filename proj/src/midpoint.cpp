#include "hypnorm/midpoint.hpp"

#include <cmath>
#include <numbers>

#include "hypnorm/error.hpp"

namespace hypnorm::geo {

std::vector<MidpointTrial> midpoint_experiment(double arc_angle, const std::vector<double>& alpha_grid) {
  if (!(arc_angle > 0.0 && arc_angle < std::numbers::pi)) {
    if (arc_angle == 0.0) throw InvalidArgument("midpoint experiment: degenerate chord (x = y)");
    throw InvalidArgument("midpoint experiment: arc angle must lie in (0, pi)");
  }
  const double half = arc_angle / 2.0;
  const Point2 x{-std::sin(half), std::cos(half)};
  const Point2 y{std::sin(half), std::cos(half)};
  const double h = std::cos(half);

  std::vector<MidpointTrial> trials;
  trials.reserve(alpha_grid.size());
  for (double alpha : alpha_grid) {
    if (!(std::fabs(alpha) < std::numbers::pi / 2)) {
      throw InvalidArgument("midpoint experiment: |alpha| must be below pi/2");
    }
    MidpointTrial t;
    t.x = x;
    t.y = y;
    t.alpha = alpha;
    t.ideal = {0.0, 1.0};
    // |(0, h) + s (sin a, cos a)| = 1, positive root
    const double ca = std::cos(alpha);
    const double s = -h * ca + std::sqrt(h * h * ca * ca - h * h + 1.0);
    t.approx = {s * std::sin(alpha), h + s * ca};
    t.error = std::atan2(std::fabs(t.approx[0]), t.approx[1]);
    trials.push_back(t);
  }
  return trials;
}

}  // namespace hypnorm::geo
