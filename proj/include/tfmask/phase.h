#ifndef TFMASK_PHASE_H_
#define TFMASK_PHASE_H_

#include <cmath>
#include <numbers>

namespace tfmask {

// Wraps an angle to (-pi, pi].
inline double WrapPhase(double x) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = x - kTwoPi * std::nearbyint(x / kTwoPi);
  if (r <= -std::numbers::pi) r += kTwoPi;
  return r;
}

}  // namespace tfmask

#endif  // TFMASK_PHASE_H_
