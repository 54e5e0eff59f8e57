#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "lazyq/errors.hpp"

// Partition function of the exponential ensemble mu(psi) ~ exp(-<psi|B|psi>)
// over Haar-distributed pure states. In the eigenbasis of B with eigenvalues
// b_1..b_n,
//
//   Z(b) = (n-1)! * dd[exp](-b_1, ..., -b_n)
//
// where dd[exp] is the (n-1)-th divided difference of the exponential on the
// negated nodes. Divided differences are evaluated confluent-safely as the
// corner entry of the exponential of the bidiagonal node matrix (unit
// superdiagonal), so repeated nodes need no case analysis. Everything is
// carried in log-space; the raw Z is only materialized for oracles.

namespace lazyq {

inline constexpr std::size_t kMaxNodes = 32;

namespace detail {

inline void validate_nodes(std::span<const double> nodes) {
  if (nodes.empty()) {
    throw std::invalid_argument("node list must be nonempty");
  }
  if (nodes.size() > kMaxNodes) {
    std::ostringstream msg;
    msg << nodes.size() << " nodes given, limit is " << kMaxNodes;
    throw Error(ErrorKind::TooManyNodes, msg.str());
  }
  for (double x : nodes) {
    if (!std::isfinite(x)) {
      throw Error(ErrorKind::NonFiniteNode, "nodes must be finite");
    }
  }
}

// exp of a small upper-triangular matrix by scaling and squaring with a
// Taylor kernel (degree 18 at theta = 1/2). Callers arrange a nonpositive
// diagonal, which keeps every entry of the result in [0, 1]; the squaring
// stages then multiply nonnegative matrices and are cancellation-free.
inline Eigen::MatrixXd expm_upper_triangular(Eigen::MatrixXd a) {
  constexpr double kTheta = 0.5;
  constexpr int kDegree = 18;

  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > kTheta) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / kTheta)));
  }
  a *= std::ldexp(1.0, -squarings);

  const Eigen::Index n = a.rows();
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= kDegree; ++k) {
    term = (term * a) / static_cast<double>(k);
    sum += term;
  }
  for (int k = 0; k < squarings; ++k) {
    sum = sum * sum;
  }
  return sum;
}

// Divided difference of exp on the given nodes, returned as
// mantissa * exp(log_scale) with log_scale = max node. The mantissa is the
// divided difference on the max-shifted nodes and lies in (0, 1].
struct ScaledDivdiff {
  double mantissa;
  double log_scale;
};

inline ScaledDivdiff dd_exp_scaled(std::span<const double> nodes) {
  validate_nodes(nodes);
  const auto n = static_cast<Eigen::Index>(nodes.size());
  const double shift = *std::max_element(nodes.begin(), nodes.end());

  Eigen::MatrixXd bidiag = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    bidiag(i, i) = nodes[static_cast<std::size_t>(i)] - shift;
    if (i + 1 < n) {
      bidiag(i, i + 1) = 1.0;
    }
  }
  const Eigen::MatrixXd e = expm_upper_triangular(std::move(bidiag));
  return {e(0, n - 1), shift};
}

}  // namespace detail

/// Confluent-safe divided difference of the exponential function on the given
/// nodes (repeats permitted). Equals exp(xi)/(n-1)! for some xi in the node
/// hull, hence always positive.
inline double divided_difference_exp(std::span<const double> nodes) {
  const auto dd = detail::dd_exp_scaled(nodes);
  return dd.mantissa * std::exp(dd.log_scale);
}

/// ln Z for temperature eigenvalues b: Z = (n-1)! * dd[exp] on the negated
/// nodes. Satisfies log_partition(b + c) = log_partition(b) - c.
inline double log_partition(std::span<const double> nodes) {
  std::vector<double> negated(nodes.begin(), nodes.end());
  for (double& x : negated) x = -x;
  const auto dd = detail::dd_exp_scaled(negated);
  // ln Z = ln (n-1)! + ln dd; the shift by the smallest node re-enters here
  // through dd.log_scale, keeping the exponential stage overflow-free.
  return std::lgamma(static_cast<double>(nodes.size())) + std::log(dd.mantissa) + dd.log_scale;
}

/// Occupations lambda_s = -d ln Z / d b_s, returned aligned with the input
/// nodes. They sum to 1, each lies in (0, 1), larger nodes get smaller
/// occupations, and adding a constant to all nodes changes nothing.
inline Eigen::VectorXd mean_occupations(std::span<const double> nodes) {
  std::vector<double> negated(nodes.begin(), nodes.end());
  for (double& x : negated) x = -x;
  const auto base = detail::dd_exp_scaled(negated);

  // Differentiating a divided difference with respect to a node duplicates
  // that node; the shared max-shift cancels in the ratio.
  const auto n = nodes.size();
  Eigen::VectorXd occupations(static_cast<Eigen::Index>(n));
  std::vector<double> extended(negated);
  extended.push_back(0.0);
  for (std::size_t s = 0; s < n; ++s) {
    extended.back() = negated[s];
    occupations(static_cast<Eigen::Index>(s)) =
        detail::dd_exp_scaled(extended).mantissa / base.mantissa;
  }
  return occupations;
}

/// Jacobian J_st = d lambda_s / d b_t, symmetric negative semidefinite with
/// the all-ones vector in its null space (the gauge direction).
inline Eigen::MatrixXd occupation_jacobian(std::span<const double> nodes) {
  std::vector<double> negated(nodes.begin(), nodes.end());
  for (double& x : negated) x = -x;
  const auto base = detail::dd_exp_scaled(negated);

  const auto n = nodes.size();
  Eigen::VectorXd lambda(static_cast<Eigen::Index>(n));
  std::vector<double> once(negated);
  once.push_back(0.0);
  for (std::size_t s = 0; s < n; ++s) {
    once.back() = negated[s];
    lambda(static_cast<Eigen::Index>(s)) = detail::dd_exp_scaled(once).mantissa / base.mantissa;
  }

  Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> twice(negated);
  twice.push_back(0.0);
  twice.push_back(0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = s; t < n; ++t) {
      twice[n] = negated[s];
      twice[n + 1] = negated[t];
      const double dd_st = detail::dd_exp_scaled(twice).mantissa / base.mantissa;
      const double multiplicity = (s == t) ? 2.0 : 1.0;
      const double value = lambda(static_cast<Eigen::Index>(s)) * lambda(static_cast<Eigen::Index>(t)) -
                           multiplicity * dd_st;
      jac(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = value;
      jac(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = value;
    }
  }
  return jac;
}

struct PartitionResult {
  double log_z;
  Eigen::VectorXd occupations;  // aligned with the input nodes
  double entropy;
};

/// Differential entropy of the ensemble relative to the uniform measure:
/// S = -sum_s b_s lambda_s - ln Z. Nonnegative, zero iff all nodes are equal,
/// and gauge-invariant.
inline double differential_entropy(std::span<const double> nodes);

/// One-pass evaluation of ln Z, occupations, and entropy.
inline PartitionResult evaluate_partition(std::span<const double> nodes) {
  PartitionResult result;
  result.log_z = log_partition(nodes);
  result.occupations = mean_occupations(nodes);
  double s = -result.log_z;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    s -= nodes[k] * result.occupations(static_cast<Eigen::Index>(k));
  }
  if (s < 0.0 && s > -1e-12) {
    s = 0.0;  // rounding drift; S >= 0 analytically
  }
  result.entropy = s;
  return result;
}

inline double differential_entropy(std::span<const double> nodes) {
  return evaluate_partition(nodes).entropy;
}

/// Independent oracle for the partition function:
/// Z = -(n-1)!/(2 pi i) * contour integral of exp(-z) / det(B - z I), with
/// the contour a circle around all eigenvalues, evaluated by the trapezoidal
/// rule (geometric convergence). The vanishing imaginary part is discarded.
inline double partition_contour(std::span<const double> nodes, int points) {
  detail::validate_nodes(nodes);
  if (points < 64) {
    throw std::invalid_argument("contour needs at least 64 points");
  }
  const auto n = nodes.size();
  double center = 0.0;
  for (double b : nodes) center += b;
  center /= static_cast<double>(n);
  double max_dist = 0.0;
  for (double b : nodes) max_dist = std::max(max_dist, std::abs(b - center));
  constexpr double kMargin = 1.0;
  const double radius = max_dist + kMargin;
  if (radius - max_dist <= 0.0) {
    throw Error(ErrorKind::ContourTooTight, "contour radius does not clear the spectrum");
  }

  std::complex<double> sum = 0.0;
  for (int j = 0; j < points; ++j) {
    const double theta = 2.0 * std::numbers::pi * j / points;
    const std::complex<double> direction = std::polar(1.0, theta);
    const std::complex<double> z = center + radius * direction;
    std::complex<double> denom = 1.0;
    for (double b : nodes) denom *= (b - z);
    sum += std::exp(-z) * direction / denom;
  }
  const std::complex<double> zval =
      -std::tgamma(static_cast<double>(n)) * (radius / static_cast<double>(points)) * sum;
  if (std::abs(zval.imag()) > 1e-10 * std::max(std::abs(zval.real()), 1e-300)) {
    throw Error(ErrorKind::NoConvergence, "contour integral has a non-negligible imaginary part");
  }
  return zval.real();
}

/// Eigenvalues of a temperature matrix, stored sorted ascending.
class TemperatureSpectrum {
 public:
  explicit TemperatureSpectrum(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    detail::validate_nodes(nodes_);
    std::sort(nodes_.begin(), nodes_.end());
  }

  std::span<const double> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<double> nodes_;
};

}  // namespace lazyq
