#include "pushsum/cones.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pushsum {

NonNegMatrix::NonNegMatrix(Matrix entries) : entries_(std::move(entries)) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index j = 0; j < entries_.cols(); ++j) {
    for (Index i = 0; i < entries_.rows(); ++i) {
      const double v = entries_(i, j);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw DomainError("NonNegMatrix: entries must be finite and nonnegative");
      }
      if (v > 0.0) triplets.emplace_back(i, j, v);
    }
  }
  sparse_.resize(entries_.rows(), entries_.cols());
  sparse_.setFromTriplets(triplets.begin(), triplets.end());
  support_ = entries_.array() > 0.0;
}

NonNegMatrix NonNegMatrix::from_triplets(Index rows, Index cols, const std::vector<Eigen::Triplet<double>>& triplets) {
  NonNegMatrix m;
  for (const auto& t : triplets) {
    if (!(t.value() >= 0.0) || !std::isfinite(t.value())) {
      throw DomainError("NonNegMatrix: entries must be finite and nonnegative");
    }
  }
  m.sparse_.resize(rows, cols);
  m.sparse_.setFromTriplets(triplets.begin(), triplets.end());
  m.sparse_.prune(0.0, 0.0);
  m.entries_ = Matrix(m.sparse_);
  m.support_ = m.entries_.array() > 0.0;
  return m;
}

NonNegMatrix NonNegMatrix::identity(Index p) { return NonNegMatrix(Matrix::Identity(p, p)); }

bool NonNegMatrix::column_allowable() const { return support_.colwise().any().all(); }

std::array<double, 2> NonNegMatrix::positive_entry_range() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Index i = 0; i < sparse_.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(sparse_, i); it; ++it) {
      lo = std::min(lo, it.value());
      hi = std::max(hi, it.value());
    }
  }
  if (hi == 0.0) throw DomainError("positive_entry_range: zero matrix");
  return {lo, hi};
}

std::vector<RowClass> row_classification(const SupportPattern& support) {
  std::vector<RowClass> out(static_cast<std::size_t>(support.rows()));
  for (Index i = 0; i < support.rows(); ++i) {
    const auto row = support.row(i);
    if (row.all()) {
      out[static_cast<std::size_t>(i)] = RowClass::Positive;
    } else if (!row.any()) {
      out[static_cast<std::size_t>(i)] = RowClass::Zero;
    } else {
      out[static_cast<std::size_t>(i)] = RowClass::Mixed;
    }
  }
  return out;
}

bool rows_positive_or_zero(const SupportPattern& support) {
  for (Index i = 0; i < support.rows(); ++i) {
    const auto row = support.row(i);
    if (row.any() && !row.all()) return false;
  }
  return true;
}

SupportPattern support_product(const SupportPattern& p, const SupportPattern& q) {
  if (p.cols() != q.rows()) throw DomainError("support_product: dimension mismatch");
  SupportPattern out = SupportPattern::Constant(p.rows(), q.cols(), false);
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index k = 0; k < p.cols(); ++k) {
      if (p(i, k)) out.row(i) = out.row(i) || q.row(k);
    }
  }
  return out;
}

ScaledProduct ScaledProduct::identity(Index p) {
  ScaledProduct m;
  m.numeric_ = Matrix::Identity(p, p);
  m.support_ = SupportPattern::Constant(p, p, false);
  m.support_.matrix().diagonal().setConstant(true);
  return m;
}

double ScaledProduct::log_scale() const { return static_cast<double>(exponent_) * std::numbers::ln2; }

void ScaledProduct::left_multiply(const NonNegMatrix& a) {
  if (a.cols() != numeric_.rows()) throw DomainError("ScaledProduct: dimension mismatch");
  const SparseRowMatrix& s = a.sparse();

  Matrix next = s * numeric_;
  SupportPattern next_support = SupportPattern::Constant(a.rows(), support_.cols(), false);
  for (Index i = 0; i < s.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
      next_support.row(i) = next_support.row(i) || support_.row(it.col());
    }
  }

  const double peak = next.maxCoeff();
  if (!(peak > 0.0)) throw DomainError("ScaledProduct: product vanished");
  // Scale by an exact power of two so the maximum lands in (1/2, 1].
  int e = 0;
  const double mant = std::frexp(peak, &e);
  if (mant == 0.5) --e;
  next *= std::ldexp(1.0, -e);

  numeric_ = std::move(next);
  support_ = std::move(next_support);
  exponent_ += e;
  ++steps_;
}

Matrix ScaledProduct::reconstruct() const { return numeric_ * std::exp(log_scale()); }

ScaledProduct multiply_accumulate(ScaledProduct product, const NonNegMatrix& a) {
  product.left_multiply(a);
  return product;
}

std::vector<RowClass> row_classification(const ScaledProduct& product) {
  return row_classification(product.support());
}

TauWitness tau_witness_sequence(const NonNegMatrix& a, long n) {
  if (n < 1) throw DomainError("tau_witness_sequence: n must be positive");
  if (!a.column_allowable()) throw DomainError("tau_witness_sequence: matrix has a zero column");
  const auto& s = a.support();
  Index row = -1;
  for (Index k = 0; k < s.rows() && row < 0; ++k) {
    if (s.row(k).any() && !s.row(k).all()) row = k;
  }
  if (row < 0) throw DomainError("tau_witness_sequence: no row mixes zero and positive entries");

  Index pos_col = 0;
  while (!s(row, pos_col)) ++pos_col;
  Index zero_col = 0;
  while (s(row, zero_col)) ++zero_col;

  TauWitness w;
  w.mixed_row = row;
  w.permutation = {pos_col, zero_col};
  for (Index j = 0; j < a.cols(); ++j) {
    if (j != pos_col && j != zero_col) w.permutation.push_back(j);
  }
  const double nd = static_cast<double>(n);
  w.x = Vector::Zero(a.cols());
  w.y = Vector::Zero(a.cols());
  w.x(pos_col) = 1.0;
  w.x(zero_col) = nd + 1.0;
  w.y(pos_col) = 1.0;
  w.y(zero_col) = nd;

  const Matrix& m = a.entries();
  const double before = hilbert_distance(w.x, w.y).value();
  const double after = hilbert_distance(m * w.x, m * w.y).value();
  w.ratio = after / before;
  return w;
}

}  // namespace pushsum
