#include "relamix/rng.hpp"

#include <cmath>

namespace relamix {

double Rng::normal() {
  // Box-Muller, cosine branch only. u1 kept away from 0.
  double u1 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace relamix
