#include "pushsum/lyapunov.hpp"

#include "pushsum/stats.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace pushsum {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix orthonormal_columns(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  return q;
}

// Scales m by an exact power of two so its largest |entry| lies in (1/2, 1].
// Returns the exponent removed, or nullopt if m is zero.
std::optional<int> renormalise(Matrix& m) {
  const double peak = m.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) return std::nullopt;
  int e = 0;
  const double mant = std::frexp(peak, &e);
  if (mant == 0.5) --e;
  m *= std::ldexp(1.0, -e);
  return e;
}

// log(tanh(phi / 4)) given log(phi).
double log_tau_from_log_phi(double log_phi) {
  if (log_phi == kNegInf) return kNegInf;
  if (log_phi < -30.0) return log_phi - std::log(4.0);
  const double y = std::exp(log_phi) / 4.0;
  if (y > 350.0) return 0.0;
  // log tanh(y) = log1p(-2 / (e^{2y} + 1)), accurate for large y as well.
  return std::log1p(-2.0 / (std::exp(2.0 * y) + 1.0));
}

std::vector<Index> positive_rows(const SupportPattern& s) {
  std::vector<Index> rows;
  for (Index i = 0; i < s.rows(); ++i) {
    if (s.row(i).all()) rows.push_back(i);
  }
  return rows;
}

bool has_mixed_row(const SupportPattern& s) { return !rows_positive_or_zero(s); }

}  // namespace

// ---------------------------------------------------------------------------
// QR (Benettin) estimator

QrEstimatorState qr_initial_state(Index dim, std::uint64_t seed) {
  if (dim < 2) throw DomainError("qr_initial_state: dimension must be at least 2");
  Rng rng(seed, kFrameStream);
  Matrix g(dim, 2);
  for (Index j = 0; j < 2; ++j) {
    for (Index i = 0; i < dim; ++i) g(i, j) = rng.normal();
  }
  return qr_initial_state(g);
}

QrEstimatorState qr_initial_state(const Matrix& frame) {
  if (frame.cols() != 2 || frame.rows() < 2) throw DomainError("qr_initial_state: frame must be dim x 2");
  QrEstimatorState s;
  s.frame = orthonormal_columns(frame);
  return s;
}

void qr_step_in_place(QrEstimatorState& state, const NonNegMatrix& a) {
  if (a.cols() != state.frame.rows() || a.rows() != a.cols()) throw DomainError("qr_step: dimension mismatch");
  const Matrix y = a.sparse() * state.frame;
  if (!(y.cwiseAbs().maxCoeff() > 0.0)) {
    throw EstimatorError("qr_step: A * frame vanished; the matrix is not column-allowable");
  }
  Eigen::HouseholderQR<Matrix> qr(y);
  Matrix q = qr.householderQ() * Matrix::Identity(y.rows(), 2);
  bool deficient = false;
  for (Index c = 0; c < 2; ++c) {
    double r = qr.matrixQR()(c, c);
    if (r < 0.0) {
      q.col(c) = -q.col(c);
      r = -r;
    }
    if (r < kRDiagonalFloor) {
      deficient = true;
      r = kRDiagonalFloor;
    }
    state.log_sums[static_cast<std::size_t>(c)] += std::log(r);
  }
  state.frame = std::move(q);
  ++state.steps;
  if (deficient) ++state.rank_deficient_steps;
}

QrEstimatorState qr_step(QrEstimatorState state, const NonNegMatrix& a) {
  qr_step_in_place(state, a);
  return state;
}

bool LyapunovEstimate::windows_stable(double tol) const {
  if (windows.size() < 2) return false;
  const auto& a = windows[windows.size() - 2];
  const auto& b = windows.back();
  return std::abs(a.lambda1 - b.lambda1) <= tol && std::abs(a.lambda2 - b.lambda2) <= tol;
}

QrEstimator::QrEstimator(Index dim, long horizon, std::uint64_t seed, int n_windows)
    : state_(qr_initial_state(dim, seed)), horizon_(horizon) {
  if (horizon < 1 || n_windows < 1) throw DomainError("QrEstimator: horizon and window count must be positive");
  burn_in_ = std::min(std::max(100L, horizon / 10), horizon - 1);
  burn_in_ = std::max(burn_in_, 0L);
  window_length_ = std::max(1L, (horizon - burn_in_) / n_windows);
}

void QrEstimator::step(const NonNegMatrix& a) {
  qr_step_in_place(state_, a);
  const long n = state_.steps;
  if (n == burn_in_) burn_in_sums_ = state_.log_sums;
  if (n > burn_in_ && (n - burn_in_) % window_length_ == 0) {
    const double len = static_cast<double>(n - burn_in_);
    double l1 = (state_.log_sums[0] - burn_in_sums_[0]) / len;
    double l2 = (state_.log_sums[1] - burn_in_sums_[1]) / len;
    if (l2 > l1) std::swap(l1, l2);
    windows_.push_back({n, l1, l2});
  }
}

LyapunovEstimate QrEstimator::readout() const {
  LyapunovEstimate est;
  est.steps = state_.steps;
  est.rank_deficient_steps = state_.rank_deficient_steps;
  est.burn_in = burn_in_;
  est.windows = windows_;
  if (state_.steps == 0) return est;
  const double n = static_cast<double>(state_.steps);
  // Growth over the steps after burn-in, so the alignment of the random
  // starting frame does not bias the rates by O(1/n).
  const bool past_burn_in = burn_in_ > 0 && state_.steps > burn_in_;
  const double len = past_burn_in ? n - static_cast<double>(burn_in_) : n;
  double l1 = (state_.log_sums[0] - (past_burn_in ? burn_in_sums_[0] : 0.0)) / len;
  double l2 = (state_.log_sums[1] - (past_burn_in ? burn_in_sums_[1] : 0.0)) / len;
  if (l2 > l1) std::swap(l1, l2);
  est.lambda1 = l1;
  if (static_cast<double>(state_.rank_deficient_steps) / n <= 0.5) {
    est.lambda2 = l2;
    est.gap = l1 - l2;
  }
  return est;
}

LyapunovEstimate estimate_top2(MatrixStream& process, long n_steps, std::uint64_t seed) {
  if (n_steps < 100) throw DomainError("estimate_top2: need at least 100 steps");
  QrEstimator est(process.dim(), n_steps, seed);
  for (long n = 0; n < n_steps; ++n) est.step(process.next());
  return est.readout();
}

// ---------------------------------------------------------------------------
// Second compound

Index pair_count(Index p) { return p * (p - 1) / 2; }

Index pair_index(Index i, Index j, Index p) { return i * (2 * p - i - 1) / 2 + (j - i - 1); }

SparseRowMatrix compound_sparse(const NonNegMatrix& a) {
  const Index p = a.rows();
  if (p < 2 || a.cols() != p) throw DomainError("compound_sparse: need a square matrix with p >= 2");
  const Matrix& m = a.entries();
  std::vector<std::vector<Index>> col_rows(static_cast<std::size_t>(p));
  for (Index i = 0; i < a.sparse().outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(a.sparse(), i); it; ++it) {
      col_rows[static_cast<std::size_t>(it.col())].push_back(i);
    }
  }
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<Index> rows;
  for (Index k = 0; k < p; ++k) {
    for (Index l = k + 1; l < p; ++l) {
      const auto& rk = col_rows[static_cast<std::size_t>(k)];
      const auto& rl = col_rows[static_cast<std::size_t>(l)];
      rows.clear();
      std::set_union(rk.begin(), rk.end(), rl.begin(), rl.end(), std::back_inserter(rows));
      const Index col = pair_index(k, l, p);
      for (std::size_t x = 0; x < rows.size(); ++x) {
        for (std::size_t y = x + 1; y < rows.size(); ++y) {
          const Index i = rows[x];
          const Index j = rows[y];
          const double minor = m(i, k) * m(j, l) - m(i, l) * m(j, k);
          if (minor != 0.0) triplets.emplace_back(pair_index(i, j, p), col, minor);
        }
      }
    }
  }
  const Index n = pair_count(p);
  SparseRowMatrix c(n, n);
  c.setFromTriplets(triplets.begin(), triplets.end());
  return c;
}

CompoundTracker::CompoundTracker(Index dim, std::uint64_t seed) : rng_(seed, kFrameStream + 1) {
  if (dim < 2) throw DomainError("CompoundTracker: dimension must be at least 2");
  if (pair_count(dim) > 2000) throw DomainError("CompoundTracker: compound dimension above 2000");
  v_.resize(pair_count(dim));
  v_ = fresh_direction();
}

Vector CompoundTracker::fresh_direction() {
  Vector v(v_.size());
  for (Index k = 0; k < v.size(); ++k) v(k) = rng_.normal();
  return v / v.norm();
}

void CompoundTracker::step(const NonNegMatrix& a) {
  Vector next = compound_sparse(a) * v_;
  double norm = next.norm();
  while (!(norm > 0.0)) {
    if (++restarts_ > 5) throw EstimatorError("compound iteration collapsed repeatedly");
    // The step is repeated from a new direction; the collapsed one carries no growth information.
    next = fresh_direction();
    norm = 1.0;
  }
  log_growth_ += std::log(norm);
  v_ = next / norm;
  ++steps_;
}

CompoundEstimate CompoundTracker::readout() const {
  if (steps_ == 0) throw EstimatorError("CompoundTracker: no steps taken");
  CompoundEstimate out;
  out.steps = steps_;
  out.restarts = restarts_;
  out.sum_top2 = log_growth_ / static_cast<double>(steps_);
  return out;
}

CompoundEstimate estimate_sum_top2_via_compound(MatrixStream& process, long n_steps, std::uint64_t seed) {
  CompoundTracker tracker(process.dim(), seed);
  for (long step = 0; step < n_steps; ++step) tracker.step(process.next());
  return tracker.readout();
}

// ---------------------------------------------------------------------------
// Birkhoff contraction of the running product

std::optional<double> log_tau_direct(const ScaledProduct& product) {
  const SupportPattern& s = product.support();
  if (has_mixed_row(s)) return 0.0;
  const auto rows = positive_rows(s);
  const Matrix& m = product.numeric();
  double phi = 0.0;
  for (Index i = 0; i < m.cols(); ++i) {
    for (Index j = i + 1; j < m.cols(); ++j) {
      double hi = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      for (const Index k : rows) {
        const double r = m(k, i) / m(k, j);
        hi = std::max(hi, r);
        lo = std::min(lo, r);
      }
      if (!rows.empty()) phi = std::max(phi, std::log1p((hi - lo) / lo));
    }
  }
  if (phi < kDirectPhiFloor) return std::nullopt;
  return log_tau_from_log_phi(std::log(phi));
}

BirkhoffGapTracker::BirkhoffGapTracker(Index dim, long horizon, long sample_points, BirkhoffMethod method)
    : product_(ScaledProduct::identity(dim)), method_(method) {
  if (horizon < 1 || sample_points < 1) throw DomainError("BirkhoffGapTracker: horizon and sample count must be positive");
  if (dim < 2) throw DomainError("BirkhoffGapTracker: dimension must be at least 2");
  if (method_ == BirkhoffMethod::Auto) {
    method_ = pair_count(dim) <= kMaxExactMinorPairs ? BirkhoffMethod::ExactMinors : BirkhoffMethod::Direct;
  }
  sample_every_ = std::max(1L, horizon / sample_points);
  if (method_ == BirkhoffMethod::ExactMinors) {
    const Index n = pair_count(dim);
    compound_ = Matrix::Identity(n, n);
  }
}

void BirkhoffGapTracker::step(const NonNegMatrix& a) {
  product_.left_multiply(a);
  if (method_ == BirkhoffMethod::ExactMinors && !compound_vanished_) {
    Matrix next = compound_sparse(a) * compound_;
    if (const auto e = renormalise(next)) {
      compound_ = std::move(next);
      compound_exponent_ += *e;
    } else {
      compound_vanished_ = true;
      compound_.setZero();
    }
  }
  const long n = product_.steps();
  const bool primitive = rows_positive_or_zero(product_.support());
  if (primitive && !first_primitive_) first_primitive_ = n;
  if (n % sample_every_ == 0) {
    BirkhoffSample s;
    s.step = n;
    if (!primitive) {
      s.log_tau = 0.0;
    } else if (const auto lt = current_log_tau()) {
      s.log_tau = *lt;
      s.usable = std::isfinite(*lt) && *lt < 0.0;
    } else {
      s.log_tau = kNegInf;
    }
    samples_.push_back(s);
  }
}

std::optional<double> BirkhoffGapTracker::current_log_tau() const {
  if (method_ == BirkhoffMethod::ExactMinors) return log_tau_exact();
  return log_tau_direct(product_);
}

double BirkhoffGapTracker::log_tau_exact() const {
  const SupportPattern& s = product_.support();
  if (has_mixed_row(s)) return 0.0;
  if (compound_vanished_) return kNegInf;
  const auto rows = positive_rows(s);
  const Matrix& m = product_.numeric();
  const Index p = m.cols();
  const double m_scale = product_.log_scale();
  const double c_scale = static_cast<double>(compound_exponent_) * std::numbers::ln2;

  // log phi = max over row pairs (k,l) and column pairs (i,j) of
  // log |log r|, r = M_ki M_lj / (M_kj M_li) = 1 + D / (M_kj M_li), with the
  // minor D read from the compound product instead of by cancellation.
  double log_phi = kNegInf;
  for (std::size_t x = 0; x < rows.size(); ++x) {
    for (std::size_t y = x + 1; y < rows.size(); ++y) {
      const Index k = rows[x];
      const Index l = rows[y];
      const auto crow = compound_.row(pair_index(k, l, p));
      for (Index i = 0; i < p; ++i) {
        for (Index j = i + 1; j < p; ++j) {
          const double d = crow(pair_index(i, j, p));
          if (d == 0.0) continue;
          const double den = m(k, j) * m(l, i);
          const double log_t = std::log(std::abs(d)) + c_scale - std::log(den) - 2.0 * m_scale;
          double log_abs_log_r = 0.0;
          if (log_t < -30.0) {
            log_abs_log_r = log_t;
          } else if (log_t < -1.0) {
            const double t = std::copysign(std::exp(log_t), d);
            log_abs_log_r = std::log(std::abs(std::log1p(t)));
          } else {
            const double lr = std::log(m(k, i)) + std::log(m(l, j)) - std::log(m(k, j)) - std::log(m(l, i));
            if (lr == 0.0) continue;
            log_abs_log_r = std::log(std::abs(lr));
          }
          log_phi = std::max(log_phi, log_abs_log_r);
        }
      }
    }
  }
  return log_tau_from_log_phi(log_phi);
}

BirkhoffEstimate BirkhoffGapTracker::finish() const {
  if (!first_primitive_) {
    throw NotPrimitiveError("tau(M_n) = 1 up to step " + std::to_string(product_.steps()) +
                            ": not primitive within horizon");
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& s : samples_) {
    if (s.usable) {
      xs.push_back(static_cast<double>(s.step));
      ys.push_back(s.log_tau);
    }
  }
  if (xs.empty()) throw EstimatorError("Birkhoff estimator: no usable log tau samples");

  BirkhoffEstimate est;
  est.method = method_;
  est.first_primitive_step = first_primitive_;
  est.samples = samples_;
  if (xs.size() == 1) {
    est.gap = -ys.front() / xs.front();
    est.fitted_points = 1;
    return est;
  }
  const std::size_t half = xs.size() / 2;
  const std::span<const double> xt(xs.data() + half, xs.size() - half);
  const std::span<const double> yt(ys.data() + half, ys.size() - half);
  est.fitted_points = static_cast<long>(xt.size());
  est.gap = xt.size() >= 2 ? -ols_slope(xt, yt) : -yt.front() / xt.front();
  return est;
}

BirkhoffEstimate birkhoff_gap_estimate(MatrixStream& process, long n_steps, long sample_points,
                                       BirkhoffMethod method) {
  BirkhoffGapTracker tracker(process.dim(), n_steps, sample_points, method);
  for (long n = 0; n < n_steps; ++n) tracker.step(process.next());
  return tracker.finish();
}

MeanLogTau mean_log_tau(MatrixStream& process, long n_samples) {
  if (n_samples < 1) throw DomainError("mean_log_tau: need at least one sample");
  MeanLogTau out;
  out.samples = n_samples;
  double sum = 0.0;
  double sum_sq = 0.0;
  bool all_one = true;
  bool saw_zero = false;
  for (long k = 0; k < n_samples; ++k) {
    const double t = tau(process.next().entries());
    if (t < 1.0) all_one = false;
    if (t == 0.0) {
      saw_zero = true;
      continue;
    }
    const double lt = std::log(t);
    sum += lt;
    sum_sq += lt * lt;
  }
  out.trivial = all_one;
  if (saw_zero) {
    out.mean = kNegInf;
    out.standard_error = 0.0;
    return out;
  }
  const double n = static_cast<double>(n_samples);
  out.mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * out.mean * out.mean) / (n - 1)) : 0.0;
  out.standard_error = std::sqrt(var / n);
  return out;
}

// ---------------------------------------------------------------------------
// First-order approximation

FirstOrderApprox first_order_approx(const ScaledProduct& product) {
  const Matrix& m = product.numeric();
  if (!(m.cwiseAbs().maxCoeff() > 0.0)) throw DomainError("first_order_approx: zero product");
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector v = svd.matrixV().col(0);
  Index peak = 0;
  v.cwiseAbs().maxCoeff(&peak);
  if (v(peak) < 0.0) v = -v;

  // One polishing round from the clamped direction: products of nonnegative
  // quantities keep the vectors nonnegative and reproduce exact zero rows.
  v = v.cwiseMax(0.0);
  if (!(v.norm() > 0.0)) v.setOnes();
  Vector u = m * v;
  u /= u.norm();
  v = m.transpose() * u;
  v /= v.norm();
  u = m * v;
  const double sigma = u.norm();
  u /= sigma;

  FirstOrderApprox out;
  out.u1 = std::move(u);
  out.v1 = std::move(v);
  out.sigma1_log = std::log(sigma) + product.log_scale();
  return out;
}

double max_row_ratio_rate(const ScaledProduct& product) {
  const Matrix& m = product.numeric();
  const double n = static_cast<double>(std::max(1L, product.steps()));
  double best = 0.0;
  for (Index k = 0; k < m.cols(); ++k) {
    double hi = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < m.rows(); ++i) {
      if (!product.support()(i, k)) continue;
      hi = std::max(hi, m(i, k));
      lo = std::min(lo, m(i, k));
    }
    if (hi > 0.0) best = std::max(best, std::log(hi / lo) / n);
  }
  return best;
}

}  // namespace pushsum
