#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "lipsync/tensor.hpp"

// Central-difference gradient checking shared by the unit and acceptance
// suites. Steps retry from coarse to fine so a kink or cancellation at one
// step size does not fail an otherwise correct gradient.

inline double fd_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Numeric d(loss)/d(slot) via central differences at step h.
inline double fd_numeric(const std::function<double()>& loss, double& slot, double h) {
  const double orig = slot;
  slot = orig + h;
  const double fp = loss();
  slot = orig - h;
  const double fm = loss();
  slot = orig;
  return (fp - fm) / (2.0 * h);
}

// Best relative error across a small ladder of step sizes.
inline double fd_check(const std::function<double()>& loss, double& slot, double analytic) {
  double best = 1e300;
  for (double h : {1e-5, 1e-6, 1e-4, 1e-7}) {
    best = std::min(best, fd_rel_err(analytic, fd_numeric(loss, slot, h)));
    if (best < 1e-7) break;
  }
  return best;
}
