#include "pushsum/primitivity.hpp"

#include <algorithm>
#include <string>

namespace pushsum {

SupportPattern support_left_multiply(const NonNegMatrix& a, const SupportPattern& m) {
  if (a.cols() != m.rows()) throw DomainError("support_left_multiply: dimension mismatch");
  const SparseRowMatrix& s = a.sparse();
  SupportPattern out = SupportPattern::Constant(a.rows(), m.cols(), false);
  for (Index i = 0; i < s.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
      if (it.value() > 0.0) out.row(i) = out.row(i) || m.row(it.col());
    }
  }
  return out;
}

namespace {

std::optional<long> first_positive_or_zero(MatrixStream& process, long max_steps) {
  SupportPattern m = process.next().support();
  for (long n = 1;; ++n) {
    if (rows_positive_or_zero(m)) return n;
    if (n == max_steps) return std::nullopt;
    m = support_left_multiply(process.next(), m);
  }
}

}  // namespace

std::optional<long> weak_primitivity_time(MatrixStream& process, long max_steps) {
  if (max_steps < 1) throw DomainError("weak_primitivity_time: max_steps must be positive");
  return first_positive_or_zero(process, max_steps);
}

std::optional<long> psi_index(MatrixStream& process, long start, long max_window) {
  if (start < 1) throw DomainError("psi_index: start must be positive");
  if (max_window < 1) throw DomainError("psi_index: max_window must be positive");
  for (long k = 1; k < start; ++k) process.next();
  return first_positive_or_zero(process, max_window);
}

namespace {

// Kind implied by the structure of every matrix in the range, if any.
std::optional<NodeKind> structural_kind(const ProcessConfig& config, Index coord, std::vector<std::string>& warnings) {
  const auto& topo = config.topology;
  const Index p = topo.node_count();
  if (coord >= p) {
    if (config.drop_rate < 1.0) return NodeKind::Virtual;
    warnings.push_back("buffer " + std::to_string(coord) +
                       " never flushes at drop_rate = 1; classified real-like, the process is degenerate");
    return NodeKind::Real;
  }
  const double keep = config.s.keep(topo.out_degree(coord));
  if (keep > 0.0) return NodeKind::Real;
  if (config.mode == Mode::Async) return NodeKind::Virtual;
  const Index in_degree = topo.in_degrees()[static_cast<std::size_t>(coord)];
  if (in_degree == 0 || config.drop_rate > 0.0) return NodeKind::Virtual;
  return std::nullopt;
}

}  // namespace

NodeClassification classify_nodes(const ProcessConfig& config, long trials, long horizon) {
  if (trials < 1) throw DomainError("classify_nodes: trials must be positive");
  if (horizon < 1) throw DomainError("classify_nodes: horizon must be positive");
  config.validate();
  const Index dim = config.dim();
  const auto n = static_cast<std::size_t>(dim);

  NodeClassification out;
  out.kinds.assign(n, NodeKind::Real);
  out.structural.assign(n, false);
  out.zero_row_frequency.assign(n, 0.0);

  std::vector<long> zero_rows(n, 0);
  std::vector<long> late_zero_rows(n, 0);
  for (long t = 0; t < trials; ++t) {
    GossipStream stream(config, kTrialStreamBase + static_cast<std::uint64_t>(t));
    SupportPattern m = SupportPattern::Constant(dim, dim, false);
    m.matrix().diagonal().setConstant(true);
    for (long k = 1; k <= horizon; ++k) {
      m = support_left_multiply(stream.next(), m);
      for (Index i = 0; i < dim; ++i) {
        if (!m.row(i).any()) {
          ++zero_rows[static_cast<std::size_t>(i)];
          if (2 * k > horizon) ++late_zero_rows[static_cast<std::size_t>(i)];
        }
      }
    }
  }
  const double total = static_cast<double>(trials) * static_cast<double>(horizon);

  for (Index i = 0; i < dim; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out.zero_row_frequency[u] = static_cast<double>(zero_rows[u]) / total;
    if (const auto kind = structural_kind(config, i, out.warnings)) {
      out.kinds[u] = *kind;
      out.structural[u] = true;
    } else {
      out.kinds[u] = late_zero_rows[u] > 0 ? NodeKind::Virtual : NodeKind::Real;
      out.warnings.push_back("coordinate " + std::to_string(i) + " decided by sampling only");
    }
    (out.kinds[u] == NodeKind::Real ? out.real_nodes : out.virtual_nodes).push_back(i);
  }
  return out;
}

long PrimitivityReport::tau_reached() const {
  return static_cast<long>(std::count_if(tau_samples.begin(), tau_samples.end(),
                                         [](const std::optional<long>& v) { return v.has_value(); }));
}

PrimitivityReport primitivity_report(const ProcessConfig& config, long trials, long horizon) {
  if (trials < 1) throw DomainError("primitivity_report: trials must be positive");
  if (horizon < 2) throw DomainError("primitivity_report: horizon must be at least 2");
  PrimitivityReport report;
  report.trials = trials;
  report.horizon = horizon;
  const long start = horizon / 2;
  for (long t = 0; t < trials; ++t) {
    const std::uint64_t id = kTrialStreamBase + static_cast<std::uint64_t>(t);
    GossipStream tau_stream(config, id);
    report.tau_samples.push_back(weak_primitivity_time(tau_stream, horizon));
    GossipStream psi_stream(config, id);
    report.psi_samples.push_back(psi_index(psi_stream, start, horizon));
  }
  const NodeClassification nodes = classify_nodes(config, std::min<long>(trials, 20), std::min<long>(horizon, 200));
  report.real_nodes = nodes.real_nodes;
  report.virtual_nodes = nodes.virtual_nodes;
  return report;
}

}  // namespace pushsum
