#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <utility>

#include "lazyq/errors.hpp"
#include "lazyq/partition.hpp"
#include "lazyq/sampler.hpp"
#include "lazyq/spectra.hpp"

// Conditional ensembles: instead of pinning the whole averaged state, only
// the expectation of one observable H is constrained. The ensemble weight is
// exp(-beta <psi|H|psi>) with a scalar inverse temperature beta, so every
// solve reduces to the spectrum of H. Composite systems are restricted to
// product states psi (x) psi', where the normalization factorizes and the
// common beta equalizes across subsystems.

namespace lazyq {

/// A Hermitian observable with its spectrum cached (ascending).
class Observable {
 public:
  explicit Observable(HermitianMatrix matrix)
      : matrix_(std::move(matrix)), spectrum_(eigh(matrix_).values) {}

  const HermitianMatrix& matrix() const { return matrix_; }
  const Spectrum& spectrum() const { return spectrum_; }
  Eigen::Index dim() const { return matrix_.dim(); }
  double spread() const { return spectrum_(spectrum_.size() - 1) - spectrum_(0); }

 private:
  HermitianMatrix matrix_;
  Spectrum spectrum_;
};

/// The ensemble exp(-beta <psi|H|psi>)/Z_H(beta). When marginals are set the
/// ensemble lives on product states and both log_z and mean decompose over
/// the two factors.
struct ConditionalEnsemble {
  Observable observable;
  double beta;
  double log_z;
  double mean;
  std::optional<std::pair<Observable, Observable>> marginals;
};

/// Expectation of H under the conditional ensemble at inverse temperature
/// beta. Strictly decreasing in beta for non-scalar H, with limits at the
/// spectral extremes; at beta = 0 it is the flat average of the spectrum.
inline double conditional_mean(const Observable& h, double beta) {
  if (!std::isfinite(beta)) {
    throw std::invalid_argument("inverse temperature must be finite");
  }
  Eigen::VectorXd nodes = beta * h.spectrum();
  const Eigen::VectorXd lambda =
      mean_occupations({nodes.data(), static_cast<std::size_t>(nodes.size())});
  return h.spectrum().dot(lambda);
}

/// d/d(beta) of conditional_mean: the quadratic form of the occupation
/// Jacobian, h' J(beta h) h. Nonpositive; zero only for scalar H.
inline double conditional_mean_derivative(const Observable& h, double beta) {
  Eigen::VectorXd nodes = beta * h.spectrum();
  const Eigen::MatrixXd jac =
      occupation_jacobian({nodes.data(), static_cast<std::size_t>(nodes.size())});
  return h.spectrum().dot(jac * h.spectrum());
}

namespace detail {

inline double scaled_log_partition(const Observable& h, double beta) {
  Eigen::VectorXd nodes = beta * h.spectrum();
  return log_partition({nodes.data(), static_cast<std::size_t>(nodes.size())});
}

}  // namespace detail

/// The conditional ensemble at a given beta, no solve. Scalar observables
/// are allowed here; there is no constraint to invert.
inline ConditionalEnsemble conditional_at(const Observable& h, double beta) {
  return ConditionalEnsemble{h, beta, detail::scaled_log_partition(h, beta),
                             conditional_mean(h, beta), std::nullopt};
}

inline constexpr double kScalarSpreadTol = 1e-12;

/// Solves conditional_mean(h, beta) = target_mean for beta. The map is
/// monotone, so a bracket on [-700/spread, 700/spread] always exists for
/// targets strictly inside the spectral range; Newton steps are accepted
/// only inside the current bracket, with bisection as fallback.
inline ConditionalEnsemble fit_conditional(const Observable& h, double target_mean,
                                           double tol = 1e-10) {
  if (tol < 1e-12) {
    throw std::invalid_argument("tolerance below 1e-12 is not supported");
  }
  const double spread = h.spread();
  if (spread <= kScalarSpreadTol) {
    throw Error(ErrorKind::ScalarObservable,
                "observable is a multiple of the identity; no constraint to satisfy");
  }
  const double h_min = h.spectrum()(0);
  const double h_max = h.spectrum()(h.spectrum().size() - 1);
  if (!(target_mean > h_min) || !(target_mean < h_max)) {
    std::ostringstream msg;
    msg << "target " << target_mean << " is outside the open spectral range (" << h_min << ", "
        << h_max << ")";
    throw Error(ErrorKind::TargetUnattainable, msg.str());
  }

  auto residual = [&](double beta) { return conditional_mean(h, beta) - target_mean; };

  // The exponent beta*h stays within +-700, where the partition machinery
  // keeps full relative accuracy.
  const double beta_cap = 700.0 / spread;
  double lo = -beta_cap;
  double hi = beta_cap;
  double beta = 0.0;
  double r = residual(beta);
  if (std::abs(r) > tol) {
    const double r_lo = residual(lo);
    const double r_hi = residual(hi);
    if (!(r_lo > 0.0) || !(r_hi < 0.0)) {
      std::ostringstream msg;
      msg << "target " << target_mean << " is closer to the spectral edge than the solver range";
      throw Error(ErrorKind::TargetUnattainable, msg.str());
    }
    if (r > 0.0) {
      lo = beta;
    } else {
      hi = beta;
    }

    constexpr int kMaxIterations = 200;
    int iterations = 0;
    while (std::abs(r) > tol) {
      if (++iterations > kMaxIterations) {
        std::ostringstream msg;
        msg << "residual " << r << " after " << kMaxIterations << " iterations (tol " << tol
            << ")";
        throw Error(ErrorKind::NoConvergence, msg.str());
      }
      const double slope = conditional_mean_derivative(h, beta);
      double candidate = beta - r / slope;
      if (!(slope < 0.0) || !(candidate > lo) || !(candidate < hi)) {
        candidate = 0.5 * (lo + hi);
      }
      if (candidate == beta || candidate == lo || candidate == hi) {
        break;  // bracket exhausted at floating-point resolution
      }
      beta = candidate;
      r = residual(beta);
      if (r > 0.0) {
        lo = beta;
      } else {
        hi = beta;
      }
    }
  }

  return ConditionalEnsemble{h, beta, detail::scaled_log_partition(h, beta), target_mean + r,
                             std::nullopt};
}

/// Kronecker-sum observable H (x) I' + I (x) H' for the non-interacting
/// coupling; its spectrum is the multiset of pairwise sums.
inline Observable compose(const Observable& h, const Observable& g) {
  const Eigen::Index n = h.dim();
  const Eigen::Index m = g.dim();
  ComplexMatrix k = ComplexMatrix::Zero(n * m, n * m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        k.block(i * m, j * m, m, m) = g.matrix().matrix();
        k.block(i * m, j * m, m, m).diagonal().array() += h.matrix().matrix()(i, i);
      } else {
        k.block(i * m, j * m, m, m).diagonal().setConstant(h.matrix().matrix()(i, j));
      }
    }
  }
  return Observable(HermitianMatrix::symmetrized(std::move(k)));
}

/// Normalization of the product-state conditional ensemble: the partition
/// function factorizes over the subsystems, so ln Z adds.
inline double joint_log_partition(const Observable& h, const Observable& g, double tau) {
  return detail::scaled_log_partition(h, tau) + detail::scaled_log_partition(g, tau);
}

/// Couples two conditional ensembles through the sum observable on product
/// states and solves for the single tau matching the summed target. The
/// root is bracketed by the two marginal betas, so the returned tau always
/// lies between them; strictly, unless they coincide.
inline ConditionalEnsemble joint_fit(const ConditionalEnsemble& cond_a,
                                     const ConditionalEnsemble& cond_b, double tol = 1e-10) {
  if (tol < 1e-12) {
    throw std::invalid_argument("tolerance below 1e-12 is not supported");
  }
  const Observable& ha = cond_a.observable;
  const Observable& hb = cond_b.observable;
  const double target = cond_a.mean + cond_b.mean;

  auto make = [&](double tau, double achieved) {
    return ConditionalEnsemble{compose(ha, hb), tau, joint_log_partition(ha, hb, tau), achieved,
                               std::make_pair(ha, hb)};
  };

  if (cond_a.beta == cond_b.beta) {
    return make(cond_a.beta, target);
  }

  auto residual = [&](double tau) {
    return conditional_mean(ha, tau) + conditional_mean(hb, tau) - target;
  };

  // The combined map is decreasing, and the achieved marginal means make the
  // residual nonnegative at min(beta) and nonpositive at max(beta).
  double lo = std::min(cond_a.beta, cond_b.beta);
  double hi = std::max(cond_a.beta, cond_b.beta);
  double r_lo = residual(lo);
  double r_hi = residual(hi);
  if (std::abs(r_lo) <= tol) {
    return make(lo, target + r_lo);
  }
  if (std::abs(r_hi) <= tol) {
    return make(hi, target + r_hi);
  }
  if (!(r_lo > 0.0) || !(r_hi < 0.0)) {
    throw Error(ErrorKind::TargetUnattainable,
                "joint target escaped the bracket of the marginal temperatures");
  }

  double tau = 0.5 * (lo + hi);
  double r = residual(tau);
  constexpr int kMaxIterations = 200;
  int iterations = 0;
  while (std::abs(r) > tol) {
    if (++iterations > kMaxIterations) {
      std::ostringstream msg;
      msg << "residual " << r << " after " << kMaxIterations << " iterations (tol " << tol << ")";
      throw Error(ErrorKind::NoConvergence, msg.str());
    }
    if (r > 0.0) {
      lo = tau;
    } else {
      hi = tau;
    }
    const double slope =
        conditional_mean_derivative(ha, tau) + conditional_mean_derivative(hb, tau);
    double candidate = tau - r / slope;
    if (!(slope < 0.0) || !(candidate > lo) || !(candidate < hi)) {
      candidate = 0.5 * (lo + hi);
    }
    if (candidate == tau || candidate == lo || candidate == hi) {
      break;
    }
    tau = candidate;
    r = residual(tau);
  }

  return make(tau, target + r);
}

/// Residual of ln Z_joint(tau) = ln Z_H(tau) + ln Z_H'(tau) on product
/// states. Zero by construction; kept as a regression guard against the
/// joint normalization drifting away from the factorized form.
inline double factorization_check(const Observable& h, const Observable& g, double tau) {
  if (!std::isfinite(tau)) {
    throw std::invalid_argument("inverse temperature must be finite");
  }
  return std::abs(joint_log_partition(h, g, tau) -
                  (detail::scaled_log_partition(h, tau) + detail::scaled_log_partition(g, tau)));
}

struct FactorizationCheck {
  double analytic_residual;
  double mc_estimate;
  double mc_expected;
  double mc_std_error;
  bool mc_pass;
};

/// Monte Carlo companion to factorization_check: estimates the product-state
/// normalization E[exp(-tau(E_h + E_g))] over independent Haar pairs and
/// compares it with Z_H(tau) Z_H'(tau) at three standard errors.
inline FactorizationCheck factorization_mc_check(const Observable& h, const Observable& g,
                                                 double tau, std::size_t count,
                                                 RandomStream& stream) {
  if (count < 2) {
    throw std::invalid_argument("need at least two samples for a standard error");
  }
  const double expected = std::exp(joint_log_partition(h, g, tau));

  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const PureState psi = sample_haar(h.dim(), stream);
    const PureState phi = sample_haar(g.dim(), stream);
    const double w =
        std::exp(-tau * (expectation(h.matrix(), psi) + expectation(g.matrix(), phi)));
    const double delta = w - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (w - mean);
  }
  const double variance = m2 / static_cast<double>(count - 1);
  const double std_error = std::sqrt(variance / static_cast<double>(count));

  return FactorizationCheck{factorization_check(h, g, tau), mean, expected, std_error,
                            std::abs(mean - expected) <= 3.0 * std_error};
}

}  // namespace lazyq
