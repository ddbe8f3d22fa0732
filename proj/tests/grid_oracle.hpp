#pragma once

// Grid-scan reference for the largest uniform visibility whose closed-form
// parent is reproducible by noisy projective measurements.

#include <cmath>

#include "jmest/compat.hpp"
#include "oracles.hpp"

namespace oracle {

inline jmest::Povm closed_parent_povm(double eta) {
  jmest::Povm p;
  for (int x : {1, -1})
    for (int y : {1, -1})
      for (int z : {1, -1}) p.effects.push_back(parent({x, y, z}, {eta, eta, eta}));
  return p;
}

inline bool parent_simulable(double eta, const jmest::StochasticMatrix2& noise) {
  return jmest::noisy_projective_simulable(closed_parent_povm(eta), noise).status == jmest::Feasibility::Feasible;
}

struct GridScan {
  double eta = 0.0;  // last feasible grid point
  int solves = 0;
};

/// Feasible set is [0, eta*]; refines the bracket with steps 1e-2, 1e-3, 1e-4.
inline GridScan grid_scan_eta(const jmest::StochasticMatrix2& noise, double finest = 1e-4) {
  GridScan g;
  double lo = 0.0, hi = 1.0;
  for (double step = 1e-2; step >= finest * 0.999; step /= 10.0) {
    const int count = static_cast<int>(std::lround((hi - lo) / step));
    double next_hi = hi;
    for (int k = 1; k <= count; ++k) {
      const double eta = lo + k * step;
      ++g.solves;
      if (!parent_simulable(eta, noise)) {
        next_hi = eta;
        break;
      }
      if (k == count) next_hi = std::min(1.0, eta + step);
    }
    lo = next_hi - step;
    hi = next_hi;
  }
  g.eta = lo;
  return g;
}

}  // namespace oracle
