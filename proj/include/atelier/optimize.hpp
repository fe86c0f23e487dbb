#pragma once

#include "atelier/numeric.hpp"

#include <functional>
#include <vector>

namespace atelier {

/// Objective value at x; fills *grad when non-null.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct AscentResult {
  Vector x;
  /// Objective at the start and after every accepted step; non-decreasing.
  std::vector<double> trace;
  int accepted_steps = 0;
};

/// Gradient ascent with step halving: a step is accepted only when the
/// objective does not decrease. Stops early when 40 halvings fail.
/// Steps longer than `max_step_norm` are shortened to it before halving.
/// Throws ErrorCode::numeric on a non-finite gradient.
AscentResult gradient_ascent(Vector x0, const Objective& f, int steps, double step_size,
                             double max_step_norm = INFINITY);

}  // namespace atelier
