#pragma once

#include "pushsum/cones.hpp"
#include "pushsum/rng.hpp"

#include <cstdint>
#include <vector>

namespace pushsum {

// Stream ids under a single user seed. Keeping them fixed means one seed
// reproduces the topology, the drop process and the initial vectors.
inline constexpr std::uint64_t kTopologyStream = 0;
inline constexpr std::uint64_t kProcessStream = 1;
inline constexpr std::uint64_t kInitialValueStream = 2;
inline constexpr std::uint64_t kFrameStream = 3;
inline constexpr std::uint64_t kTrialStreamBase = 1000;

/// Source of the transition matrices A_1, A_2, ... of a matrix process.
class MatrixStream {
 public:
  virtual ~MatrixStream() = default;
  virtual Index dim() const = 0;
  virtual NonNegMatrix next() = 0;
};

class ConstantStream final : public MatrixStream {
 public:
  explicit ConstantStream(NonNegMatrix a) : a_(std::move(a)) {}
  Index dim() const override { return a_.rows(); }
  NonNegMatrix next() override { return a_; }

 private:
  NonNegMatrix a_;
};

/// Replays a fixed list of matrices, wrapping around at the end.
class CyclicStream final : public MatrixStream {
 public:
  explicit CyclicStream(std::vector<NonNegMatrix> items) : items_(std::move(items)) {
    if (items_.empty()) throw DomainError("CyclicStream: empty sequence");
  }
  Index dim() const override { return items_.front().rows(); }
  NonNegMatrix next() override {
    const NonNegMatrix& a = items_[pos_];
    pos_ = (pos_ + 1) % items_.size();
    return a;
  }

 private:
  std::vector<NonNegMatrix> items_;
  std::size_t pos_ = 0;
};

/// i.i.d. draws from a finite list of matrices with given probabilities.
class FiniteRangeStream final : public MatrixStream {
 public:
  FiniteRangeStream(std::vector<NonNegMatrix> items, std::vector<double> probabilities, std::uint64_t seed,
                    std::uint64_t stream = kProcessStream)
      : items_(std::move(items)), cumulative_(probabilities.size()), rng_(seed, stream) {
    if (items_.empty() || items_.size() != probabilities.size()) {
      throw DomainError("FiniteRangeStream: items and probabilities must match and be nonempty");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < probabilities.size(); ++k) {
      if (!(probabilities[k] >= 0.0)) throw DomainError("FiniteRangeStream: negative probability");
      acc += probabilities[k];
      cumulative_[k] = acc;
    }
    if (!(acc > 0.0)) throw DomainError("FiniteRangeStream: probabilities sum to zero");
    for (double& c : cumulative_) c /= acc;
  }
  Index dim() const override { return items_.front().rows(); }
  NonNegMatrix next() override {
    const double u = rng_.uniform();
    std::size_t k = 0;
    while (k + 1 < cumulative_.size() && u >= cumulative_[k]) ++k;
    return items_[k];
  }

 private:
  std::vector<NonNegMatrix> items_;
  std::vector<double> cumulative_;
  Rng rng_;
};

}  // namespace pushsum
