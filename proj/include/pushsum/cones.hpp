#pragma once

// Geometry of the nonnegative orthant: Hilbert projective distance, the
// Birkhoff contraction coefficient, total variation, and long products of
// nonnegative matrices kept in range by power-of-two renormalisation.

#include "pushsum/common.hpp"

#include <array>
#include <cstdint>
#include <cmath>
#include <limits>
#include <vector>

namespace pushsum {

/// Nonnegative extended real used for Hilbert distances. +infinity is a tag,
/// never a floating-point infinity, so it cannot leak into arithmetic.
template <typename Scalar>
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;

  explicit ExtendedReal(Scalar value) : value_(value) {
    if (!(value >= Scalar(0)) || !std::isfinite(static_cast<double>(value))) {
      throw DomainError("ExtendedReal: finite values must be nonnegative");
    }
  }

  static ExtendedReal infinity() {
    ExtendedReal r;
    r.infinite_ = true;
    return r;
  }

  bool is_infinite() const { return infinite_; }
  bool is_finite() const { return !infinite_; }

  Scalar value() const {
    if (infinite_) throw DomainError("ExtendedReal: value() of infinity");
    return value_;
  }

  friend bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }
  friend bool operator<(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.infinite_) return false;
    return b.infinite_ || a.value_ < b.value_;
  }
  friend bool operator<=(const ExtendedReal& a, const ExtendedReal& b) { return !(b < a); }

 private:
  Scalar value_ = Scalar(0);
  bool infinite_ = false;
};

using Extended = ExtendedReal<double>;

/// Quotient of extended reals with the convention infinity/infinity = 1.
/// 0/0 has no meaning and is rejected.
template <typename Scalar>
ExtendedReal<Scalar> extended_ratio(const ExtendedReal<Scalar>& num, const ExtendedReal<Scalar>& den) {
  if (num.is_infinite() && den.is_infinite()) return ExtendedReal<Scalar>(Scalar(1));
  if (num.is_infinite()) return ExtendedReal<Scalar>::infinity();
  if (den.is_infinite()) return ExtendedReal<Scalar>(Scalar(0));
  if (den.value() == Scalar(0)) {
    if (num.value() == Scalar(0)) throw DomainError("extended_ratio: 0/0");
    return ExtendedReal<Scalar>::infinity();
  }
  return ExtendedReal<Scalar>(num.value() / den.value());
}

namespace detail {

template <typename Derived>
void require_nonneg_nonzero(const Eigen::MatrixBase<Derived>& x, const char* what) {
  using Scalar = typename Derived::Scalar;
  bool any_positive = false;
  for (Index k = 0; k < x.size(); ++k) {
    const Scalar v = x(k);
    if (!(v >= Scalar(0)) || !std::isfinite(static_cast<double>(v))) {
      throw DomainError(std::string(what) + ": entries must be finite and nonnegative");
    }
    any_positive = any_positive || v > Scalar(0);
  }
  if (!any_positive) throw DomainError(std::string(what) + ": zero vector");
}

}  // namespace detail

/// Hilbert projective distance between nonnegative nonzero vectors, computed
/// from the extreme coordinate ratios on the common support. Infinite when the
/// vectors lie on different faces of the orthant.
template <typename DerivedX, typename DerivedY>
ExtendedReal<typename DerivedX::Scalar> hilbert_distance(const Eigen::MatrixBase<DerivedX>& x,
                                                         const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != y.size()) throw DomainError("hilbert_distance: length mismatch");
  detail::require_nonneg_nonzero(x, "hilbert_distance");
  detail::require_nonneg_nonzero(y, "hilbert_distance");

  Scalar max_ratio = Scalar(0);
  Scalar min_ratio = std::numeric_limits<Scalar>::infinity();
  for (Index k = 0; k < x.size(); ++k) {
    const bool xp = x(k) > Scalar(0);
    const bool yp = y(k) > Scalar(0);
    if (xp != yp) return ExtendedReal<Scalar>::infinity();
    if (!xp) continue;
    const Scalar r = x(k) / y(k);
    max_ratio = std::max(max_ratio, r);
    min_ratio = std::min(min_ratio, r);
  }
  using std::log1p;
  return ExtendedReal<Scalar>(log1p((max_ratio - min_ratio) / min_ratio));
}

/// Hilbert distance straight from log(inf{l : l*y >= x} / sup{l : x >= l*y}).
/// Each candidate l = x_k/y_k is tested against every coordinate of both
/// vector inequalities, independently of the ratio scan in hilbert_distance().
template <typename DerivedX, typename DerivedY>
ExtendedReal<typename DerivedX::Scalar> hilbert_distance_by_definition(const Eigen::MatrixBase<DerivedX>& x,
                                                                       const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != y.size()) throw DomainError("hilbert_distance_by_definition: length mismatch");
  detail::require_nonneg_nonzero(x, "hilbert_distance_by_definition");
  detail::require_nonneg_nonzero(y, "hilbert_distance_by_definition");

  const Index p = x.size();
  std::vector<Scalar> candidates;
  candidates.reserve(static_cast<std::size_t>(p) + 1);
  candidates.push_back(Scalar(0));
  for (Index k = 0; k < p; ++k) {
    if (y(k) > Scalar(0)) candidates.push_back(x(k) / y(k));
  }

  bool upper_found = false;
  Scalar upper = Scalar(0);  // inf { l >= 0 : l*y - x >= 0 }
  bool lower_found = false;
  Scalar lower = Scalar(0);  // sup { l >= 0 : x - l*y >= 0 }
  for (const Scalar l : candidates) {
    bool dominates = true;   // l*y >= x
    bool dominated = true;   // x >= l*y
    for (Index k = 0; k < p; ++k) {
      // Coordinate k of each inequality, divided by y_k when positive so the
      // candidate equal to x_k / y_k compares exactly.
      if (y(k) > Scalar(0)) {
        const Scalar r = x(k) / y(k);
        if (l < r) dominates = false;
        if (r < l) dominated = false;
      } else if (x(k) > Scalar(0)) {
        dominates = false;
      }
    }
    if (dominates && (!upper_found || l < upper)) {
      upper = l;
      upper_found = true;
    }
    if (dominated && (!lower_found || l > lower)) {
      lower = l;
      lower_found = true;
    }
  }
  if (!upper_found || lower == Scalar(0)) return ExtendedReal<Scalar>::infinity();
  using std::log;
  return ExtendedReal<Scalar>(log(upper / lower));
}

/// Projective diameter of the column set: max over column pairs of the Hilbert
/// distance, evaluated from entry ratios on the strictly positive rows.
/// Infinite iff some row holds both a zero and a positive entry.
template <typename Derived>
ExtendedReal<typename Derived::Scalar> phi(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  std::vector<Index> positive_rows;
  bool any_positive = false;
  for (Index k = 0; k < a.rows(); ++k) {
    Index positives = 0;
    for (Index j = 0; j < a.cols(); ++j) {
      const Scalar v = a(k, j);
      if (!(v >= Scalar(0)) || !std::isfinite(static_cast<double>(v))) {
        throw DomainError("phi: entries must be finite and nonnegative");
      }
      if (v > Scalar(0)) ++positives;
    }
    if (positives > 0 && positives < a.cols()) {
      // Mixed row; still validate the remaining entries before answering.
      for (Index r = k + 1; r < a.rows(); ++r) {
        for (Index j = 0; j < a.cols(); ++j) {
          if (!(a(r, j) >= Scalar(0)) || !std::isfinite(static_cast<double>(a(r, j)))) {
            throw DomainError("phi: entries must be finite and nonnegative");
          }
        }
      }
      return ExtendedReal<Scalar>::infinity();
    }
    if (positives == a.cols()) positive_rows.push_back(k);
    any_positive = any_positive || positives > 0;
  }
  if (!any_positive) throw DomainError("phi: zero matrix");

  using std::log1p;
  Scalar best = Scalar(0);
  for (Index i = 0; i < a.cols(); ++i) {
    for (Index j = i + 1; j < a.cols(); ++j) {
      Scalar max_ratio = Scalar(0);
      Scalar min_ratio = std::numeric_limits<Scalar>::infinity();
      for (const Index k : positive_rows) {
        const Scalar r = a(k, i) / a(k, j);
        max_ratio = std::max(max_ratio, r);
        min_ratio = std::min(min_ratio, r);
      }
      best = std::max(best, Scalar(log1p((max_ratio - min_ratio) / min_ratio)));
    }
  }
  return ExtendedReal<Scalar>(best);
}

/// Birkhoff contraction coefficient tanh(phi/4); equals 1 when phi is infinite.
template <typename Derived>
typename Derived::Scalar tau(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  const auto f = phi(a);
  if (f.is_infinite()) return Scalar(1);
  using std::tanh;
  return tanh(f.value() / Scalar(4));
}

/// Total variation distance between two probability vectors.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar tv_distance(const Eigen::MatrixBase<DerivedX>& xi, const Eigen::MatrixBase<DerivedY>& eta) {
  using Scalar = typename DerivedX::Scalar;
  constexpr double kSumTolerance = 1e-9;
  if (xi.size() != eta.size()) throw DomainError("tv_distance: length mismatch");
  for (Index k = 0; k < xi.size(); ++k) {
    if (!(xi(k) >= Scalar(0)) || !(eta(k) >= Scalar(0))) {
      throw DomainError("tv_distance: entries must be nonnegative");
    }
  }
  using std::abs;
  if (abs(static_cast<double>(xi.sum()) - 1.0) > kSumTolerance ||
      abs(static_cast<double>(eta.sum()) - 1.0) > kSumTolerance) {
    throw DomainError("tv_distance: inputs must be probability vectors");
  }
  return Scalar(0.5) * (xi - eta).cwiseAbs().sum();
}

/// Dense nonnegative matrix with its exact positivity pattern and a sparse
/// copy for cheap products. Immutable after construction.
class NonNegMatrix {
 public:
  NonNegMatrix() = default;
  explicit NonNegMatrix(Matrix entries);

  /// Builds from (row, col, value) triplets; duplicate positions are summed.
  static NonNegMatrix from_triplets(Index rows, Index cols, const std::vector<Eigen::Triplet<double>>& triplets);
  static NonNegMatrix identity(Index p);

  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  const Matrix& entries() const { return entries_; }
  const SupportPattern& support() const { return support_; }
  const SparseRowMatrix& sparse() const { return sparse_; }

  /// Every column has a strictly positive entry.
  bool column_allowable() const;
  /// Smallest and largest positive entries; throws on the zero matrix.
  std::array<double, 2> positive_entry_range() const;

  friend bool operator==(const NonNegMatrix& a, const NonNegMatrix& b) { return a.entries_ == b.entries_; }

 private:
  void finish_from_sparse();

  Matrix entries_;
  SupportPattern support_;
  SparseRowMatrix sparse_;
};

enum class RowClass { Positive, Zero, Mixed };

/// Classification of each row of a pattern: all true, all false, or mixed.
std::vector<RowClass> row_classification(const SupportPattern& support);

/// True when every row is Positive or Zero.
bool rows_positive_or_zero(const SupportPattern& support);

/// Boolean-semiring product (P*Q)_ij = OR_k (P_ik AND Q_kj).
SupportPattern support_product(const SupportPattern& p, const SupportPattern& q);

/// Running product M_n = A_n ... A_1 as numeric * 2^exponent with the largest
/// numeric entry kept in (1/2, 1], plus the exact boolean support product.
class ScaledProduct {
 public:
  ScaledProduct() = default;
  static ScaledProduct identity(Index p);

  const Matrix& numeric() const { return numeric_; }
  double log_scale() const;
  std::int64_t binary_exponent() const { return exponent_; }
  const SupportPattern& support() const { return support_; }
  long steps() const { return steps_; }
  Index dim() const { return numeric_.rows(); }

  /// M <- A * M.
  void left_multiply(const NonNegMatrix& a);

  /// numeric * e^log_scale; overflows for long products.
  Matrix reconstruct() const;

 private:
  Matrix numeric_;
  SupportPattern support_;
  std::int64_t exponent_ = 0;
  long steps_ = 0;
};

/// Value-semantic form of ScaledProduct::left_multiply.
ScaledProduct multiply_accumulate(ScaledProduct product, const NonNegMatrix& a);

std::vector<RowClass> row_classification(const ScaledProduct& product);

/// Vector pair showing tau(A) = 1 for a matrix with a mixed row and no zero
/// column: x = (1, n+1, 0, ...), y = (1, n, 0, ...) after moving a positive
/// entry of the mixed row to column 0 and a zero entry of it to column 1.
struct TauWitness {
  Vector x;
  Vector y;
  /// h(Ax, Ay) / h(x, y); tends to 1 from below.
  double ratio = 0.0;
  Index mixed_row = 0;
  /// Column order used; permutation[0] is positive and permutation[1] zero in the mixed row.
  std::vector<Index> permutation;
};

TauWitness tau_witness_sequence(const NonNegMatrix& a, long n);

}  // namespace pushsum
