#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <sstream>
#include <utility>

#include "lazyq/errors.hpp"

// Dense complex-Hermitian linear algebra substrate: validated matrix types,
// eigendecomposition, rank-1 projectors, and quadratic-form expectations.

namespace lazyq {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Real eigenvalues in ascending order.
using Spectrum = Eigen::VectorXd;

inline constexpr double kHermitianTol = 1e-12;  // relative to max |entry|
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kUnitNormTol = 1e-12;
inline constexpr double kPsdTol = 1e-10;
inline constexpr double kFullRangeTol = 1e-10;

namespace detail {

inline double max_abs(const ComplexMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// Largest |m(i,j) - conj(m(j,i))| together with its location.
inline std::pair<double, std::pair<Eigen::Index, Eigen::Index>> hermitian_defect(
    const ComplexMatrix& m) {
  double worst = 0.0;
  std::pair<Eigen::Index, Eigen::Index> where{0, 0};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i; j < m.cols(); ++j) {
      const double d = std::abs(m(i, j) - std::conj(m(j, i)));
      if (d > worst) {
        worst = d;
        where = {i, j};
      }
    }
  }
  return {worst, where};
}

}  // namespace detail

/// Square complex matrix equal to its own conjugate transpose. The stored
/// matrix is exactly Hermitian (symmetrized on construction).
class HermitianMatrix {
 public:
  /// Validates Hermiticity within kHermitianTol relative to the largest entry.
  static HermitianMatrix validated(const ComplexMatrix& m) {
    if (m.rows() != m.cols()) {
      throw Error(ErrorKind::DimensionMismatch, "matrix must be square");
    }
    const auto [defect, where] = detail::hermitian_defect(m);
    if (defect > kHermitianTol * detail::max_abs(m)) {
      std::ostringstream msg;
      msg << "entry (" << where.first << "," << where.second << ") differs from the conjugate of ("
          << where.second << "," << where.first << ") by " << defect;
      throw Error(ErrorKind::NotHermitian, msg.str());
    }
    return HermitianMatrix(0.5 * (m + m.adjoint()));
  }

  /// For matrices Hermitian by construction (projectors, U diag U+, averages);
  /// symmetrizes without raising an error.
  static HermitianMatrix symmetrized(const ComplexMatrix& m) {
    return HermitianMatrix(0.5 * (m + m.adjoint()));
  }

  const ComplexMatrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

 private:
  explicit HermitianMatrix(ComplexMatrix m) : m_(std::move(m)) {}
  ComplexMatrix m_;
};

struct EigenDecomposition {
  Spectrum values;      // ascending
  ComplexMatrix basis;  // unitary, columns paired with values
};

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues.
inline EigenDecomposition eigh(const HermitianMatrix& m) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(m.matrix());
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::NoConvergence, "hermitian eigensolver failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Unit-trace positive-semidefinite Hermitian matrix; the target average
/// state. Carries its eigendecomposition and a full-range flag (all
/// eigenvalues above kFullRangeTol).
class DensityMatrix {
 public:
  friend DensityMatrix validate_density(const ComplexMatrix& m);

  const ComplexMatrix& matrix() const { return m_.matrix(); }
  const HermitianMatrix& hermitian() const { return m_; }
  const Spectrum& spectrum() const { return decomposition_.values; }
  const ComplexMatrix& basis() const { return decomposition_.basis; }
  Eigen::Index dim() const { return m_.dim(); }
  bool full_range() const { return full_range_; }

 private:
  DensityMatrix(HermitianMatrix m, EigenDecomposition d, bool full_range)
      : m_(std::move(m)), decomposition_(std::move(d)), full_range_(full_range) {}

  HermitianMatrix m_;
  EigenDecomposition decomposition_;
  bool full_range_;
};

/// Checks Hermiticity, unit trace, and positive semidefiniteness (in that
/// order) and flags whether the state is full-range.
inline DensityMatrix validate_density(const ComplexMatrix& m) {
  HermitianMatrix h = HermitianMatrix::validated(m);
  const double trace = h.matrix().trace().real();
  if (std::abs(trace - 1.0) > kTraceTol) {
    std::ostringstream msg;
    msg << "trace is " << trace << ", expected 1";
    throw Error(ErrorKind::TraceNotOne, msg.str());
  }
  EigenDecomposition d = eigh(h);
  const double min_eig = d.values(0);
  if (min_eig < -kPsdTol) {
    std::ostringstream msg;
    msg << "smallest eigenvalue is " << min_eig;
    throw Error(ErrorKind::NotPositive, msg.str());
  }
  const bool full_range = min_eig > kFullRangeTol;
  return DensityMatrix(std::move(h), std::move(d), full_range);
}

/// Unit-norm complex vector.
class PureState {
 public:
  /// Requires Euclidean norm 1 within kUnitNormTol.
  static PureState validated(ComplexVector amplitudes) {
    if (std::abs(amplitudes.norm() - 1.0) > kUnitNormTol) {
      throw std::invalid_argument("pure state amplitudes must have unit norm");
    }
    return PureState(std::move(amplitudes));
  }

  /// Scales an arbitrary nonzero vector to unit norm.
  static PureState normalized(ComplexVector amplitudes) {
    const double norm = amplitudes.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw std::invalid_argument("cannot normalize a zero or non-finite vector");
    }
    return PureState(amplitudes / norm);
  }

  const ComplexVector& amplitudes() const { return psi_; }
  Eigen::Index dim() const { return psi_.size(); }

 private:
  explicit PureState(ComplexVector psi) : psi_(std::move(psi)) {}
  ComplexVector psi_;
};

/// Rank-1 projector |psi><psi|; trace 1 and idempotent for unit psi, and
/// invariant under a global phase of psi.
inline HermitianMatrix projector(const PureState& psi) {
  return HermitianMatrix::symmetrized(psi.amplitudes() * psi.amplitudes().adjoint());
}

/// <psi|H|psi>, the expectation of a Hermitian observable in a pure state.
/// Always lies within the spectral range of H.
inline double expectation(const HermitianMatrix& h, const PureState& psi) {
  if (h.dim() != psi.dim()) {
    std::ostringstream msg;
    msg << "observable dim " << h.dim() << " vs state dim " << psi.dim();
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
  return (psi.amplitudes().adjoint() * h.matrix() * psi.amplitudes())(0, 0).real();
}

}  // namespace lazyq
