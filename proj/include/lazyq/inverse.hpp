#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lazyq/errors.hpp"
#include "lazyq/partition.hpp"
#include "lazyq/spectra.hpp"

// Inverse problem: given a full-range density matrix rho, find the Hermitian
// temperature matrix B whose exponential ensemble averages to rho. B shares
// rho's eigenbasis, so the solve runs on eigenvalues only: Newton iteration
// for mean_occupations(b) = spec(rho) on the trace-zero slice, using the
// occupation Jacobian pseudo-inverted on the gauge-orthogonal complement.

namespace lazyq {

/// Additive-constant convention for B. TraceZero: sum of eigenvalues is 0.
/// LogZZero: ln Z(B) = 0, which makes S = -Tr B rho.
enum class Gauge { TraceZero, LogZZero };

inline const char* to_string(Gauge gauge) {
  return gauge == Gauge::TraceZero ? "trace-zero" : "logz-zero";
}

/// A fitted exponential ensemble: temperature matrix, gauge, cached ln Z and
/// entropy, plus the target state and the shared eigenbasis data the fit ran
/// in. nodes[k] pairs with basis column k and with occupations[k].
struct LazyEnsemble {
  HermitianMatrix temperature;
  Gauge gauge;
  double log_z;
  double entropy;
  DensityMatrix target;

  Eigen::VectorXd nodes;        // eigenvalues of B, aligned with basis columns
  ComplexMatrix basis;          // common eigenbasis of B and target
  Eigen::VectorXd occupations;  // mean occupations, aligned with nodes
  int newton_iterations = 0;

  TemperatureSpectrum temperature_spectrum() const {
    return TemperatureSpectrum(std::vector<double>(nodes.begin(), nodes.end()));
  }

  double node_min() const { return nodes.minCoeff(); }
  double node_max() const { return nodes.maxCoeff(); }
};

namespace detail {

inline double gauge_shift(std::span<const double> nodes, double log_z, Gauge gauge) {
  if (gauge == Gauge::TraceZero) {
    double mean = 0.0;
    for (double b : nodes) mean += b;
    return -mean / static_cast<double>(nodes.size());
  }
  // ln Z(b + c) = ln Z(b) - c, so c = ln Z zeroes it.
  return log_z;
}

// Newton solve of mean_occupations(b) = target on the trace-zero slice.
// Returns the nodes and the iteration count. Iterates past the caller's
// tolerance down to the numerical floor: node magnitudes grow like the
// inverse of the smallest occupation, so identities linear in b (such as
// S = -Tr B rho in the logz-zero gauge) need the residual as small as the
// evaluation noise allows. The no-descent break below is the floor detector.
constexpr double kResidualFloor = 1e-15;

inline std::pair<Eigen::VectorXd, int> solve_occupations(const Eigen::VectorXd& target,
                                                         int max_iterations) {
  const Eigen::Index n = target.size();
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) b(i) = -std::log(target(i));
  b.array() -= b.mean();

  auto residual = [&](const Eigen::VectorXd& nodes) -> Eigen::VectorXd {
    return mean_occupations({nodes.data(), static_cast<std::size_t>(nodes.size())}) - target;
  };

  Eigen::VectorXd r = residual(b);
  double r_norm = r.cwiseAbs().maxCoeff();
  int iterations = 0;
  while (r_norm > kResidualFloor && iterations < max_iterations) {
    ++iterations;
    const Eigen::MatrixXd jac =
        occupation_jacobian({b.data(), static_cast<std::size_t>(b.size())});

    // Pseudo-inverse on the complement of the all-ones null direction.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    const Eigen::VectorXd& mu = es.eigenvalues();
    const Eigen::MatrixXd& v = es.eigenvectors();
    const double cutoff = 1e-13 * std::max(mu.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (std::abs(mu(k)) > cutoff) {
        step -= (v.col(k).dot(r) / mu(k)) * v.col(k);
      }
    }
    step.array() -= step.mean();

    // Damp by halving until the residual decreases.
    double scale = 1.0;
    Eigen::VectorXd b_next;
    Eigen::VectorXd r_next;
    double r_next_norm = r_norm;
    for (int halvings = 0; halvings < 40; ++halvings) {
      b_next = b + scale * step;
      r_next = residual(b_next);
      r_next_norm = r_next.cwiseAbs().maxCoeff();
      if (r_next_norm < r_norm) {
        break;
      }
      scale *= 0.5;
    }
    if (!(r_next_norm < r_norm)) {
      break;  // no descent left; report the residual we reached
    }
    b = b_next;
    r = r_next;
    r_norm = r_next_norm;
  }
  return {b, iterations};
}

// Degenerate target eigenvalues must map to equal nodes: cluster the
// ascending target spectrum by gaps above the threshold and broadcast the
// mean node within each cluster.
inline void broadcast_degenerate(const Eigen::VectorXd& target, Eigen::VectorXd& b,
                                 double gap = 1e-9) {
  Eigen::Index start = 0;
  for (Eigen::Index i = 1; i <= target.size(); ++i) {
    if (i == target.size() || target(i) - target(i - 1) > gap) {
      const double mean = b.segment(start, i - start).mean();
      b.segment(start, i - start).setConstant(mean);
      start = i;
    }
  }
}

}  // namespace detail

/// Lazy ensemble induced by a given temperature matrix (the forward map).
/// The stored temperature is the gauge representative; the distribution it
/// defines is unchanged by the shift.
inline LazyEnsemble ensemble_from_temperature(const HermitianMatrix& temperature,
                                              Gauge gauge = Gauge::TraceZero) {
  EigenDecomposition d = eigh(temperature);
  Eigen::VectorXd b = d.values;
  std::span<const double> nodes{b.data(), static_cast<std::size_t>(b.size())};

  Eigen::VectorXd lambda = mean_occupations(nodes);
  lambda /= lambda.sum();
  DensityMatrix target =
      validate_density(d.basis * lambda.cast<Complex>().asDiagonal() * d.basis.adjoint());

  const double shift = detail::gauge_shift(nodes, log_partition(nodes), gauge);
  b.array() += shift;
  const PartitionResult part = evaluate_partition(nodes);

  LazyEnsemble ens{HermitianMatrix::symmetrized(d.basis * b.cast<Complex>().asDiagonal() *
                                                d.basis.adjoint()),
                   gauge,
                   part.log_z,
                   part.entropy,
                   std::move(target),
                   b,
                   d.basis,
                   part.occupations,
                   0};
  return ens;
}

/// Solves for the temperature matrix whose ensemble averages to rho, then
/// applies the requested gauge. Requires a full-range rho. Throws
/// NoConvergence with the final residual if the Newton budget is exhausted.
inline LazyEnsemble fit_temperature(const DensityMatrix& rho, Gauge gauge = Gauge::TraceZero,
                                    double tol = 1e-10) {
  if (tol < 1e-12) {
    throw std::invalid_argument("tolerance below 1e-12 is not supported");
  }
  if (!rho.full_range()) {
    std::ostringstream msg;
    msg << "smallest eigenvalue " << rho.spectrum()(0)
        << " is not above the full-range threshold " << kFullRangeTol;
    throw Error(ErrorKind::NotFullRange, msg.str());
  }

  constexpr int kMaxIterations = 60;
  const Eigen::VectorXd target = rho.spectrum();
  auto [b, iterations] = detail::solve_occupations(target, kMaxIterations);
  detail::broadcast_degenerate(target, b);

  std::span<const double> nodes{b.data(), static_cast<std::size_t>(b.size())};
  const Eigen::VectorXd achieved = mean_occupations(nodes);
  const double residual = (achieved - target).cwiseAbs().maxCoeff();
  if (residual > tol) {
    std::ostringstream msg;
    msg << "residual " << residual << " after " << iterations << " iterations (tol " << tol << ")";
    throw Error(ErrorKind::NoConvergence, msg.str());
  }

  b.array() += detail::gauge_shift(nodes, log_partition(nodes), gauge);
  const PartitionResult part = evaluate_partition(nodes);

  LazyEnsemble ens{HermitianMatrix::symmetrized(rho.basis() * b.cast<Complex>().asDiagonal() *
                                                rho.basis().adjoint()),
                   gauge,
                   part.log_z,
                   part.entropy,
                   rho,
                   b,
                   rho.basis(),
                   part.occupations,
                   iterations};
  return ens;
}

/// Probability density of the ensemble at a pure state, relative to the
/// normalized Haar measure: exp(-<psi|B|psi> - ln Z). Gauge-invariant.
inline double ensemble_density(const LazyEnsemble& ens, const PureState& psi) {
  return std::exp(-expectation(ens.temperature, psi) - ens.log_z);
}

/// Shifts B by a multiple of the identity so the requested gauge condition
/// holds. Occupations, entropy, and density values are unchanged.
inline LazyEnsemble regauge(const LazyEnsemble& ens, Gauge gauge) {
  std::span<const double> nodes{ens.nodes.data(), static_cast<std::size_t>(ens.nodes.size())};
  const double shift = detail::gauge_shift(nodes, ens.log_z, gauge);

  LazyEnsemble out = ens;
  out.gauge = gauge;
  out.nodes.array() += shift;
  out.log_z -= shift;
  out.temperature = HermitianMatrix::symmetrized(
      ens.temperature.matrix() +
      shift * ComplexMatrix::Identity(ens.temperature.dim(), ens.temperature.dim()));
  return out;
}

}  // namespace lazyq
