#pragma once

// Structural analysis of a matrix process in the boolean semiring: when the
// running product first has only positive-or-zero rows, the psi index, and
// the split of augmented coordinates into real and virtual nodes.

#include "pushsum/process.hpp"
#include "pushsum/stream.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pushsum {

/// Support of A * M computed from A's sparsity.
SupportPattern support_left_multiply(const NonNegMatrix& a, const SupportPattern& m);

/// Smallest n <= max_steps for which every row of the support of A_n ... A_1
/// is all-true or all-false. Empty means "not reached", which is a legitimate
/// answer (the identity process never mixes). Consumes up to max_steps matrices.
std::optional<long> weak_primitivity_time(MatrixStream& process, long max_steps);

/// psi_n: the shortest window A_{n+psi-1} ... A_n whose product has only
/// positive-or-zero rows, searched up to max_window. Steps 1..n-1 are read
/// from the stream and discarded first.
std::optional<long> psi_index(MatrixStream& process, long start, long max_window);

enum class NodeKind { Real, Virtual };

struct NodeClassification {
  std::vector<NodeKind> kinds;
  /// The kind follows from the structure of the range rather than from sampling.
  std::vector<bool> structural;
  std::vector<Index> real_nodes;
  std::vector<Index> virtual_nodes;
  /// Fraction of observed steps with a zero row of M_n, per coordinate.
  std::vector<double> zero_row_frequency;
  std::vector<std::string> warnings;
};

/// Real coordinates have a positive diagonal in every matrix of the range, so
/// their row of M_n never vanishes; virtual ones have a zero row with positive
/// probability each step, hence infinitely often. Coordinates fitting neither
/// rule are decided by the Monte Carlo zero-row frequency over the later half
/// of each trial and flagged with a warning.
NodeClassification classify_nodes(const ProcessConfig& config, long trials, long horizon);

struct PrimitivityReport {
  std::vector<std::optional<long>> tau_samples;
  std::vector<std::optional<long>> psi_samples;
  std::vector<Index> real_nodes;
  std::vector<Index> virtual_nodes;
  long horizon = 0;
  long trials = 0;

  long tau_reached() const;
};

/// Monte Carlo over independent streams: weak primitivity time and psi_n at
/// n = horizon / 2 for each trial, plus the node classification.
PrimitivityReport primitivity_report(const ProcessConfig& config, long trials, long horizon);

}  // namespace pushsum
