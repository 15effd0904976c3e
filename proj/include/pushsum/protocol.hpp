#pragma once

// Push-sum with running sums on a lossy directed network, written as a
// linear system on an augmented network: one buffer coordinate per directed
// edge holds mass that was sent but not yet delivered.

#include "pushsum/cones.hpp"
#include "pushsum/rng.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pushsum {

struct Edge {
  Index from = 0;
  Index to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed graph without self-loops in which every node sends somewhere.
/// Edge ordinals are grouped by sender, in the order each sender's
/// out-neighbours were listed.
class NetworkTopology {
 public:
  NetworkTopology(Index node_count, const std::vector<Edge>& edges);

  Index node_count() const { return node_count_; }
  Index edge_count() const { return static_cast<Index>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(Index ordinal) const { return edges_[static_cast<std::size_t>(ordinal)]; }
  /// Ordinals of the edges leaving node.
  const std::vector<Index>& out_edges(Index node) const { return out_edges_[static_cast<std::size_t>(node)]; }
  Index out_degree(Index node) const { return static_cast<Index>(out_edges(node).size()); }
  std::vector<Index> out_neighbors(Index node) const;
  std::optional<Index> edge_ordinal(Index from, Index to) const;
  std::vector<Index> in_degrees() const;

 private:
  Index node_count_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Index>> out_edges_;
};

/// Parses "i j" lines (0-indexed, '#' starts a comment). The node count is
/// one more than the largest id unless given.
NetworkTopology parse_edge_list(std::istream& in, std::optional<Index> node_count = std::nullopt);
NetworkTopology read_edge_list(const std::string& path, std::optional<Index> node_count = std::nullopt);

bool strongly_connected(const NetworkTopology& topology);

/// Coordinates of the augmented network: real nodes 0..p-1, then one buffer
/// per edge in ordinal order.
struct AugmentedIndex {
  Index p_real = 0;
  Index n_buffers = 0;
  Index dim = 0;

  Index buffer_of_edge(Index ordinal) const { return p_real + ordinal; }
  bool is_buffer(Index coord) const { return coord >= p_real; }
};

AugmentedIndex build_augmented(const NetworkTopology& topology);

/// Fraction s of a node's mass sent per activation, split evenly over its
/// out-edges. The classic choice s = d/(d+1) keeps and sends equal shares.
class PacketFraction {
 public:
  static PacketFraction classic() { return PacketFraction(); }
  static PacketFraction fixed(double s);

  bool is_classic() const { return !fixed_; }
  double value() const;
  /// Mass kept by a node of the given out-degree.
  double keep(Index degree) const;
  /// Mass pushed along each out-edge.
  double share(Index degree) const;
  std::string describe() const;

 private:
  std::optional<double> fixed_;
};

enum class Mode { Sync, Async };

using EdgeMask = std::vector<bool>;

/// Value and weight vectors over augmented coordinates. x may carry signed
/// entries; w is nonnegative.
struct ProtocolState {
  Vector x;
  Vector w;
  long step = 0;
};

/// Lifts initial vectors given either on real nodes (length p) or on all
/// augmented coordinates (length dim, buffers zero).
ProtocolState make_state(const NetworkTopology& topology, const Vector& x0, const Vector& w0);

/// Every node keeps (1 - s) of its mass and pushes s/d into each out-edge
/// buffer; live buffers flush everything to their receiver and empty,
/// dropped ones keep accumulating.
ProtocolState step_synchronous(const NetworkTopology& topology, const ProtocolState& state, const EdgeMask& live,
                               const PacketFraction& s);

/// Same rule restricted to one woken sender. live_out is indexed by the
/// woken node's out-edges in ordinal order.
ProtocolState step_asynchronous(const NetworkTopology& topology, const ProtocolState& state, Index woken,
                                const EdgeMask& live_out, const PacketFraction& s);

/// Realised randomness of one step.
struct StepOutcome {
  /// Per edge ordinal; in async mode only the woken node's edges can be live.
  EdgeMask live_edges;
  std::optional<Index> woken;
  std::optional<NonNegMatrix> matrix;
};

/// Draws i.i.d. Bernoulli(drop_rate) losses per edge (sync) or a uniform
/// woken node and losses on its edges (async).
StepOutcome draw_outcome(const NetworkTopology& topology, Mode mode, double drop_rate, Rng& rng);

ProtocolState apply_outcome(const NetworkTopology& topology, const ProtocolState& state, const StepOutcome& outcome,
                            const PacketFraction& s);

/// Column-stochastic matrix A_n with apply_outcome(state) == A_n * state.
NonNegMatrix as_matrix(const NetworkTopology& topology, const StepOutcome& outcome, const PacketFraction& s, Mode mode);

/// x_i / w_i on real nodes with w_i > 0; empty where w_i == 0.
std::vector<std::optional<double>> ratios(const ProtocolState& state, Index p_real);

struct TrajectoryPoint {
  long step = 0;
  /// max over defined real-node ratios of |x_i / w_i - target|.
  std::optional<double> max_ratio_error;
  /// TV distance between x / sum(x) and w / sum(w); only for nonnegative x.
  std::optional<double> tv;
  double mass_x = 0.0;
  double mass_w = 0.0;
};

struct Trajectory {
  double target = 0.0;
  std::vector<TrajectoryPoint> points;
  ProtocolState final_state;
};

/// Plain simulation of the protocol; the matrix stream of GossipStream with
/// the same seed produces the same losses.
Trajectory run_consensus(const NetworkTopology& topology, const Vector& x0, const Vector& w0, long n_steps,
                         std::uint64_t seed, double drop_rate, const PacketFraction& s, Mode mode);

}  // namespace pushsum
