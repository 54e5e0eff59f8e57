#pragma once

#include <cmath>

#include "lazyq/errors.hpp"

// Closed forms for dimension 2. With temperature eigenvalues (b - beta,
// b + beta) the partition function is exp(-b) * sinh(beta)/beta and the
// occupation split is 1/2 +- delta(beta), delta being half the Langevin
// function. Removable singularities at beta = 0 are handled by short Taylor
// series (switchover 1e-4, truncation error below 1e-16).

namespace lazyq {

inline constexpr double kQubitSeriesCutoff = 1e-4;

/// sinh(beta)/beta, the qubit partition function in the trace-zero gauge.
/// Even in beta, with value 1 at the removable singularity.
inline double qubit_partition(double beta) {
  if (std::abs(beta) < kQubitSeriesCutoff) {
    const double b2 = beta * beta;
    return 1.0 + b2 / 6.0 + b2 * b2 / 120.0;
  }
  return std::sinh(beta) / beta;
}

/// delta(beta) = (coth(beta) - 1/beta) / 2, half the Langevin function.
/// Odd, strictly increasing, with range (-1/2, 1/2).
inline double qubit_delta(double beta) {
  if (std::abs(beta) < kQubitSeriesCutoff) {
    return beta / 6.0 - beta * beta * beta / 90.0;
  }
  return 0.5 * (1.0 / std::tanh(beta) - 1.0 / beta);
}

/// d delta / d beta = (1/beta^2 - csch^2(beta)) / 2; strictly positive.
inline double qubit_delta_derivative(double beta) {
  if (std::abs(beta) < kQubitSeriesCutoff) {
    return 1.0 / 6.0 - beta * beta / 30.0;
  }
  const double s = std::sinh(beta);
  return 0.5 * (1.0 / (beta * beta) - 1.0 / (s * s));
}

/// Inverse of qubit_delta: the beta with qubit_delta(beta) = delta, defined
/// for |delta| < 1/2. Newton iteration seeded by the rational inverse-Langevin
/// approximation y (3 - y^2) / (1 - y^2) with y = 2 delta, safeguarded by
/// bisection on a bracket.
inline double qubit_inverse_delta(double delta) {
  if (!(std::abs(delta) < 0.5)) {
    throw Error(ErrorKind::OutOfRange, "delta must lie strictly inside (-1/2, 1/2)");
  }
  if (delta == 0.0) {
    return 0.0;
  }

  const double y = 2.0 * delta;
  double beta = y * (3.0 - y * y) / (1.0 - y * y);

  // Expand to a bracket [lo, hi] with qubit_delta(lo) <= delta <= qubit_delta(hi).
  double lo = beta, hi = beta;
  double step = std::max(1.0, std::abs(beta));
  while (qubit_delta(lo) > delta) {
    lo -= step;
    step *= 2.0;
  }
  step = std::max(1.0, std::abs(beta));
  while (qubit_delta(hi) < delta) {
    hi += step;
    step *= 2.0;
  }

  for (int iter = 0; iter < 200; ++iter) {
    const double f = qubit_delta(beta) - delta;
    if (std::abs(f) <= 1e-15) {
      break;
    }
    if (f > 0.0) {
      hi = beta;
    } else {
      lo = beta;
    }
    const double derivative = qubit_delta_derivative(beta);
    double next = beta - f / derivative;
    if (!(next > lo && next < hi)) {
      next = 0.5 * (lo + hi);  // Newton left the bracket; bisect
    }
    if (next == beta) {
      break;
    }
    beta = next;
  }
  return beta;
}

}  // namespace lazyq
