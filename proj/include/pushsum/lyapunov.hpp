#pragma once

// Top-two Lyapunov exponents of a nonnegative matrix process and the
// estimators of the spectral gap lambda_1 - lambda_2 that cross-check it.

#include "pushsum/cones.hpp"
#include "pushsum/stream.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace pushsum {

/// R-diagonal entries below this are treated as rank deficiency.
inline constexpr double kRDiagonalFloor = 1e-300;

/// Orthonormal dim x 2 frame carried through A_n ... A_1 by repeated QR.
struct QrEstimatorState {
  Matrix frame;
  std::array<double, 2> log_sums{0.0, 0.0};
  long steps = 0;
  long rank_deficient_steps = 0;
};

/// Random orthonormal starting frame drawn from (seed, kFrameStream).
QrEstimatorState qr_initial_state(Index dim, std::uint64_t seed);
/// Starting frame given explicitly; its two columns are orthonormalised.
QrEstimatorState qr_initial_state(const Matrix& frame);

/// One Benettin step: factor A * frame = Q R with R_ii >= 0, keep Q, add log R_ii.
QrEstimatorState qr_step(QrEstimatorState state, const NonNegMatrix& a);
void qr_step_in_place(QrEstimatorState& state, const NonNegMatrix& a);

struct WindowEstimate {
  long end_step = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

struct LyapunovEstimate {
  /// Averages over the steps after burn-in (over all steps when the run is
  /// too short to have one).
  double lambda1 = 0.0;
  /// Empty when more than half of the steps were rank deficient (lambda_2 = -infinity).
  std::optional<double> lambda2;
  /// lambda1 - lambda2; empty when lambda2 is -infinity.
  std::optional<double> gap;
  long steps = 0;
  long rank_deficient_steps = 0;
  long burn_in = 0;
  /// Averages from the end of burn-in to each window end.
  std::vector<WindowEstimate> windows;

  /// Last two windows agree to within tol on both exponents.
  bool windows_stable(double tol) const;
};

/// QR estimator with windowed convergence diagnostics over a known horizon.
class QrEstimator {
 public:
  QrEstimator(Index dim, long horizon, std::uint64_t seed, int n_windows = 10);

  void step(const NonNegMatrix& a);
  const QrEstimatorState& state() const { return state_; }
  LyapunovEstimate readout() const;

 private:
  QrEstimatorState state_;
  long horizon_;
  long burn_in_;
  long window_length_;
  std::array<double, 2> burn_in_sums_{0.0, 0.0};
  std::vector<WindowEstimate> windows_;
};

/// lambda_1, lambda_2 of the process from n_steps QR steps. Requires n_steps >= 100.
LyapunovEstimate estimate_top2(MatrixStream& process, long n_steps, std::uint64_t seed);

/// Number of index pairs i < j among p indices.
Index pair_count(Index p);
/// Lexicographic position of the pair (i, j), i < j.
Index pair_index(Index i, Index j, Index p);

/// Second compound (exterior square): entry ((i,j),(k,l)) is the 2x2 minor
/// of rows {i,j} and columns {k,l}. Minors keep their sign.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> compound_matrix(
    const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  const Index p = a.rows();
  if (p < 2 || a.cols() != p) throw DomainError("compound_matrix: need a square matrix with p >= 2");
  const Index n = pair_count(p);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> c(n, n);
  for (Index i = 0; i < p; ++i) {
    for (Index j = i + 1; j < p; ++j) {
      const Index r = pair_index(i, j, p);
      for (Index k = 0; k < p; ++k) {
        for (Index l = k + 1; l < p; ++l) {
          c(r, pair_index(k, l, p)) = a(i, k) * a(j, l) - a(i, l) * a(j, k);
        }
      }
    }
  }
  return c;
}

inline Matrix compound_matrix(const NonNegMatrix& a) { return compound_matrix(a.entries()); }

/// Same minors as compound_matrix(), assembled from the sparsity of A.
SparseRowMatrix compound_sparse(const NonNegMatrix& a);

struct CompoundEstimate {
  double sum_top2 = 0.0;
  long steps = 0;
  long restarts = 0;
};

/// Normalised vector iteration on the second compound of each step. A
/// collapsed iterate restarts from a fresh random direction; the sixth
/// collapse is fatal.
class CompoundTracker {
 public:
  CompoundTracker(Index dim, std::uint64_t seed);

  void step(const NonNegMatrix& a);
  CompoundEstimate readout() const;

 private:
  Vector fresh_direction();

  Rng rng_;
  Vector v_;
  double log_growth_ = 0.0;
  long steps_ = 0;
  long restarts_ = 0;
};

/// Top exponent of the compound process, i.e. lambda_1 + lambda_2.
CompoundEstimate estimate_sum_top2_via_compound(MatrixStream& process, long n_steps, std::uint64_t seed);

enum class BirkhoffMethod {
  /// ExactMinors when the compound dimension is at most kMaxExactMinorPairs, else Direct.
  Auto,
  /// Minors come from a separately scaled compound product, so log tau(M_n)
  /// stays accurate long after tau(M_n) underflows.
  ExactMinors,
  /// Ratios of the numeric product only; samples are dropped once phi
  /// falls under kDirectPhiFloor.
  Direct,
};

inline constexpr Index kMaxExactMinorPairs = 1000;
inline constexpr double kDirectPhiFloor = 1e-10;

struct BirkhoffSample {
  long step = 0;
  /// log tau(M_step); 0 while some row is mixed.
  double log_tau = 0.0;
  /// Usable for the slope fit: primitive, finite and above precision floor.
  bool usable = false;
};

struct BirkhoffEstimate {
  double gap = 0.0;
  BirkhoffMethod method = BirkhoffMethod::Auto;
  std::optional<long> first_primitive_step;
  long fitted_points = 0;
  std::vector<BirkhoffSample> samples;
};

/// log tau(M) from the numeric part of a scaled product (Direct method).
/// Returns 0 for a mixed row and an empty optional when phi is under kDirectPhiFloor.
std::optional<double> log_tau_direct(const ScaledProduct& product);

/// Tracks M_n (and, for ExactMinors, its second compound) and samples
/// log tau(M_n). The gap is minus the least-squares slope of log tau(M_n)
/// against n over the later half of the usable samples.
class BirkhoffGapTracker {
 public:
  BirkhoffGapTracker(Index dim, long horizon, long sample_points, BirkhoffMethod method = BirkhoffMethod::Auto);

  void step(const NonNegMatrix& a);
  const ScaledProduct& product() const { return product_; }
  BirkhoffMethod method() const { return method_; }
  std::optional<long> first_primitive_step() const { return first_primitive_; }
  const std::vector<BirkhoffSample>& samples() const { return samples_; }

  /// log tau(M_n) at the current step with the configured method.
  std::optional<double> current_log_tau() const;

  /// Throws NotPrimitiveError if tau(M_n) stayed 1 throughout, EstimatorError
  /// if no sample was usable.
  BirkhoffEstimate finish() const;

 private:
  double log_tau_exact() const;

  ScaledProduct product_;
  BirkhoffMethod method_;
  long sample_every_;
  std::optional<long> first_primitive_;
  std::vector<BirkhoffSample> samples_;
  // Second compound of M_n as compound_ * 2^compound_exponent_.
  Matrix compound_;
  std::int64_t compound_exponent_ = 0;
  bool compound_vanished_ = false;
};

BirkhoffEstimate birkhoff_gap_estimate(MatrixStream& process, long n_steps, long sample_points,
                                       BirkhoffMethod method = BirkhoffMethod::Auto);

struct MeanLogTau {
  /// Mean of log tau(A_k); -infinity if some sampled step had tau = 0.
  double mean = 0.0;
  double standard_error = 0.0;
  long samples = 0;
  /// Every sampled single step had tau = 1, so the lower bound on the gap is 0.
  bool trivial = false;
};

/// Monte Carlo estimate of E log tau(A_1); minus this bounds the gap from below.
MeanLogTau mean_log_tau(MatrixStream& process, long n_samples);

/// Rank-one part u1 * sigma1 * v1^T of a product.
struct FirstOrderApprox {
  Vector u1;
  Vector v1;
  double sigma1_log = 0.0;
};

/// Top singular triplet of the product, with u1, v1 entrywise nonnegative
/// and u1 exactly zero on the zero rows of the product.
FirstOrderApprox first_order_approx(const ScaledProduct& product);

/// max over rows i, j and columns k with M_ik, M_jk > 0 of (1/n) log(M_ik / M_jk).
/// Tends to 0 for weakly subexponential entry ratios.
double max_row_ratio_rate(const ScaledProduct& product);

}  // namespace pushsum
