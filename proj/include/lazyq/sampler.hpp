#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <utility>
#include <vector>

#include "lazyq/errors.hpp"
#include "lazyq/inverse.hpp"
#include "lazyq/partition.hpp"
#include "lazyq/spectra.hpp"

// Monte Carlo side: Haar draws on the unit sphere of C^n and rejection
// sampling from exponential ensembles. Everything is deterministic given the
// seed; streams split into statistically independent children so batches can
// be produced in parallel and merged.

namespace lazyq {

namespace detail {

inline std::uint64_t splitmix64_step(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t state = seed;
  const std::uint64_t h = splitmix64_step(state);
  state ^= stream_id + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return splitmix64_step(state);
}

}  // namespace detail

/// Deterministic random source. Identical (seed, stream id) pairs reproduce
/// identical draws bit-for-bit; split() derives child streams whose ids are
/// hashed from the parent's, so fan-out does not share subsequences.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id), engine_(detail::mix_seed(seed, stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  RandomStream split() {
    ++children_;
    return RandomStream(seed_, detail::mix_seed(stream_id_ ^ 0x5851f42d4c957f2dULL, children_));
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; hand-rolled so draws are identical
  /// across standard libraries.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the logarithm finite.
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t children_ = 0;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Identifies the distribution a batch was drawn from: the dimension and the
/// trace-zero representative of the temperature matrix (gauge-invariant, and
/// the zero matrix for Haar batches).
struct SourceDescriptor {
  Eigen::Index dim;
  ComplexMatrix temperature;  // trace-zero gauge representative

  static constexpr double kMatchTol = 1e-9;

  bool matches(const SourceDescriptor& other) const {
    if (dim != other.dim) return false;
    return (temperature - other.temperature).cwiseAbs().maxCoeff() <= kMatchTol;
  }
};

inline SourceDescriptor describe_source(const LazyEnsemble& ens) {
  const double mean = ens.nodes.mean();
  const Eigen::Index n = ens.temperature.dim();
  return SourceDescriptor{
      n, ens.temperature.matrix() - mean * ComplexMatrix::Identity(n, n)};
}

/// A set of accepted draws plus the proposal count that produced them.
struct SampleBatch {
  Eigen::Index dim;
  std::vector<PureState> states;
  std::uint64_t proposed = 0;
  SourceDescriptor source;

  std::size_t accepted() const { return states.size(); }
  double acceptance_rate() const {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted()) / static_cast<double>(proposed);
  }
};

/// One draw from the unitary-invariant measure: independent standard complex
/// Gaussian components, normalized.
inline PureState sample_haar(Eigen::Index n, RandomStream& stream) {
  if (n < 1) {
    throw std::invalid_argument("dimension must be at least 1");
  }
  ComplexVector psi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = stream.normal();
    const double im = stream.normal();
    psi(i) = Complex(re, im);
  }
  return PureState::normalized(std::move(psi));
}

/// Acceptance rate of the rejection sampler: Z(b - b_min), in (0, 1].
inline double predicted_acceptance(const LazyEnsemble& ens) {
  Eigen::VectorXd shifted = ens.nodes.array() - ens.node_min();
  return std::exp(log_partition({shifted.data(), static_cast<std::size_t>(shifted.size())}));
}

inline constexpr double kMaxSamplingSpread = 50.0;

/// Exact draws from the ensemble by rejection against the Haar proposal:
/// accept with probability exp(-(<psi|B|psi> - b_min)), which is the
/// tightest exponential envelope. Gauge-invariant.
inline SampleBatch sample_lazy(const LazyEnsemble& ens, std::size_t count, RandomStream& stream) {
  if (count < 1) {
    throw std::invalid_argument("sample count must be at least 1");
  }
  const double spread = ens.node_max() - ens.node_min();
  if (spread > kMaxSamplingSpread) {
    std::ostringstream msg;
    msg << "spectral spread " << spread << " exceeds " << kMaxSamplingSpread
        << "; predicted acceptance is below exp(-50)";
    throw Error(ErrorKind::SpreadTooLarge, msg.str());
  }

  const double b_min = ens.node_min();
  SampleBatch batch{ens.temperature.dim(), {}, 0, describe_source(ens)};
  batch.states.reserve(count);
  while (batch.states.size() < count) {
    ++batch.proposed;
    PureState psi = sample_haar(batch.dim, stream);
    const double energy = expectation(ens.temperature, psi);
    if (stream.uniform() < std::exp(-(energy - b_min))) {
      batch.states.push_back(std::move(psi));
    }
  }
  return batch;
}

/// Concatenates two batches drawn from the same source. All estimators are
/// averages, so merging is associative and order-independent.
inline SampleBatch merge(const SampleBatch& a, const SampleBatch& b) {
  if (!a.source.matches(b.source)) {
    throw Error(ErrorKind::SourceMismatch, "cannot merge batches from different ensembles");
  }
  SampleBatch out = a;
  out.states.insert(out.states.end(), b.states.begin(), b.states.end());
  out.proposed += b.proposed;
  return out;
}

/// Average projector of the batch: the finite-sample estimate of the state
/// the ensemble averages to. Trace-normalized exactly.
inline DensityMatrix empirical_density_matrix(const SampleBatch& batch) {
  if (batch.states.empty()) {
    throw Error(ErrorKind::EmptyBatch, "no accepted states to average");
  }
  ComplexMatrix sum = ComplexMatrix::Zero(batch.dim, batch.dim);
  for (const PureState& psi : batch.states) {
    sum.noalias() += psi.amplitudes() * psi.amplitudes().adjoint();
  }
  sum /= sum.trace().real();
  return validate_density(sum);
}

struct EntropyEstimate {
  double value;
  double std_error;
  std::size_t count;
};

/// Sample mean of ln density over the batch: a consistent estimator of the
/// ensemble's entropy (its divergence from uniform). The standard error uses
/// the plain sample variance; draws are independent.
inline EntropyEstimate estimate_entropy(const SampleBatch& batch, const LazyEnsemble& ens) {
  if (batch.states.empty()) {
    throw Error(ErrorKind::EmptyBatch, "no accepted states to average");
  }
  if (!batch.source.matches(describe_source(ens))) {
    throw Error(ErrorKind::SourceMismatch, "batch was not drawn from this ensemble");
  }
  const std::size_t n = batch.states.size();
  double mean = 0.0;
  for (const PureState& psi : batch.states) {
    mean += -expectation(ens.temperature, psi) - ens.log_z;
  }
  mean /= static_cast<double>(n);

  double variance = 0.0;
  if (n >= 2) {
    for (const PureState& psi : batch.states) {
      const double w = -expectation(ens.temperature, psi) - ens.log_z;
      variance += (w - mean) * (w - mean);
    }
    variance /= static_cast<double>(n - 1);
  }
  return EntropyEstimate{mean, std::sqrt(variance / static_cast<double>(n)), n};
}

}  // namespace lazyq
