// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

namespace magpha {

/// sqrt(max(1 - c^2, 0)). Shared by the analytic recombination and the
/// differentiable sine reconstruction so both produce bit-identical values.
inline double pythag_sine_value(double c) {
  const double c2 = c * c;
  const double rem = 1.0 - c2;
  return rem > 0.0 ? std::sqrt(rem) : 0.0;
}

}  // namespace magpha
