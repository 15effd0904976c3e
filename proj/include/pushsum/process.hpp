#pragma once

// Seeded generators of topologies and of the i.i.d. matrix process of the
// lossy push-sum lift, plus checks of the boundedness hypotheses.

#include "pushsum/protocol.hpp"
#include "pushsum/stream.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace pushsum {

struct ProcessConfig {
  NetworkTopology topology;
  Mode mode = Mode::Sync;
  double drop_rate = 0.0;
  PacketFraction s = PacketFraction::classic();
  std::uint64_t seed = 0;

  /// Throws ConfigError unless drop_rate is in [0, 1].
  void validate() const;
  Index dim() const { return topology.node_count() + topology.edge_count(); }
};

inline constexpr int kMaxTopologyDraws = 1000;

/// Each node gets d distinct out-neighbours other than itself, drawn
/// uniformly (partial Fisher-Yates) from (seed, kTopologyStream). Graphs that
/// are not strongly connected are rejected and redrawn from the same stream.
NetworkTopology random_regular_out_digraph(Index p, Index d, std::uint64_t seed);

NetworkTopology complete_digraph(Index p);

/// Draws one step's outcome and materialises its matrix.
std::pair<NonNegMatrix, StepOutcome> sample_step_matrix(const ProcessConfig& config, Rng& rng);

/// The i.i.d. gossip matrix process of a configuration.
class GossipStream final : public MatrixStream {
 public:
  explicit GossipStream(ProcessConfig config, std::uint64_t stream = kProcessStream);

  Index dim() const override { return config_.dim(); }
  NonNegMatrix next() override;
  /// Next step with its outcome; outcome.matrix is filled.
  StepOutcome next_outcome();
  const ProcessConfig& config() const { return config_; }

 private:
  ProcessConfig config_;
  Rng rng_;
};

struct RangeElement {
  NonNegMatrix matrix;
  double probability = 0.0;
  /// A representative outcome producing the matrix.
  StepOutcome outcome;
};

/// Limits above which enumerate_range refuses.
inline constexpr double kMaxSyncPatterns = 1 << 20;
inline constexpr double kMaxAsyncPatterns = 1e6;
/// Dense storage bound for the enumerated matrices.
inline constexpr double kMaxRangeBytes = 256.0 * 1024 * 1024;

/// Exact support of the one-step distribution. Identical matrices (bitwise,
/// they come from identical expressions) are merged and their probabilities summed.
std::vector<RangeElement> enumerate_range(const ProcessConfig& config);

struct ConditionReport {
  double alpha_min = 0.0;
  double beta_max = 0.0;
  bool finite_range = true;
  bool bounded_condition = false;
  /// alpha/beta come from the exact range rather than from samples.
  bool exact = false;
  long samples = 0;
  /// Mean psi_1 over Monte Carlo trials, empty if some trial did not reach primitivity.
  std::optional<double> psi_expectation_estimate;
  long psi_trials = 0;
  long psi_not_reached = 0;
};

/// Boundedness of positive entries (exact when the range is enumerable) and
/// an estimate of E psi_n.
ConditionReport verify_conditions(const ProcessConfig& config, long n_samples, std::uint64_t seed);

}  // namespace pushsum
