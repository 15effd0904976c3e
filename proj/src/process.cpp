#include "pushsum/process.hpp"

#include "pushsum/primitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <string>

namespace pushsum {

void ProcessConfig::validate() const {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) throw ConfigError("drop_rate must lie in [0, 1]");
}

NetworkTopology random_regular_out_digraph(Index p, Index d, std::uint64_t seed) {
  if (p < 2) throw ConfigError("random_regular_out_digraph: need p >= 2");
  if (d < 1 || d >= p) throw ConfigError("random_regular_out_digraph: need 1 <= d < p");
  Rng rng(seed, kTopologyStream);
  std::vector<Edge> edges;
  std::vector<Index> pool;
  for (int attempt = 0; attempt < kMaxTopologyDraws; ++attempt) {
    edges.clear();
    for (Index v = 0; v < p; ++v) {
      pool.clear();
      for (Index u = 0; u < p; ++u) {
        if (u != v) pool.push_back(u);
      }
      for (Index k = 0; k < d; ++k) {
        const auto remaining = static_cast<std::uint64_t>(pool.size()) - static_cast<std::uint64_t>(k);
        const auto pick = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng.below(remaining));
        std::swap(pool[static_cast<std::size_t>(k)], pool[pick]);
        edges.push_back({v, pool[static_cast<std::size_t>(k)]});
      }
    }
    NetworkTopology topo(p, edges);
    if (strongly_connected(topo)) return topo;
  }
  throw ConfigError("random_regular_out_digraph: no strongly connected graph in " + std::to_string(kMaxTopologyDraws) +
                    " draws; increase d");
}

NetworkTopology complete_digraph(Index p) {
  std::vector<Edge> edges;
  for (Index v = 0; v < p; ++v) {
    for (Index u = 0; u < p; ++u) {
      if (u != v) edges.push_back({v, u});
    }
  }
  return NetworkTopology(p, edges);
}

std::pair<NonNegMatrix, StepOutcome> sample_step_matrix(const ProcessConfig& config, Rng& rng) {
  StepOutcome outcome = draw_outcome(config.topology, config.mode, config.drop_rate, rng);
  NonNegMatrix a = as_matrix(config.topology, outcome, config.s, config.mode);
  return {std::move(a), std::move(outcome)};
}

GossipStream::GossipStream(ProcessConfig config, std::uint64_t stream)
    : config_(std::move(config)), rng_(config_.seed, stream) {
  config_.validate();
}

NonNegMatrix GossipStream::next() { return sample_step_matrix(config_, rng_).first; }

StepOutcome GossipStream::next_outcome() {
  auto [a, outcome] = sample_step_matrix(config_, rng_);
  outcome.matrix = std::move(a);
  return outcome;
}

namespace {

// Probabilities of (live, dropped) for a single transmission.
std::vector<std::pair<bool, double>> edge_options(double drop_rate) {
  std::vector<std::pair<bool, double>> opts;
  if (drop_rate < 1.0) opts.emplace_back(true, 1.0 - drop_rate);
  if (drop_rate > 0.0) opts.emplace_back(false, drop_rate);
  return opts;
}

class RangeCollector {
 public:
  explicit RangeCollector(const ProcessConfig& config) : config_(config) {}

  void add(const StepOutcome& outcome, double probability) {
    NonNegMatrix a = as_matrix(config_.topology, outcome, config_.s, config_.mode);
    const Matrix& m = a.entries();
    std::string key(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
    const auto [it, inserted] = index_.try_emplace(std::move(key), items_.size());
    if (inserted) {
      items_.push_back({std::move(a), probability, outcome});
    } else {
      items_[it->second].probability += probability;
    }
  }

  std::vector<RangeElement> take() { return std::move(items_); }

 private:
  const ProcessConfig& config_;
  std::map<std::string, std::size_t> index_;
  std::vector<RangeElement> items_;
};

void check_range_memory(const ProcessConfig& config, double patterns) {
  const double dim = static_cast<double>(config.dim());
  const double bytes = patterns * dim * dim * static_cast<double>(sizeof(double));
  if (bytes > kMaxRangeBytes) {
    throw DomainError("enumerate_range: " + std::to_string(patterns) + " matrices of dimension " +
                      std::to_string(config.dim()) + " would not fit in memory; use Monte Carlo sampling");
  }
}

}  // namespace

std::vector<RangeElement> enumerate_range(const ProcessConfig& config) {
  config.validate();
  const auto& topo = config.topology;
  const auto opts = edge_options(config.drop_rate);
  const double per_edge = static_cast<double>(opts.size());
  RangeCollector collector(config);

  if (config.mode == Mode::Sync) {
    const double patterns = std::pow(per_edge, static_cast<double>(topo.edge_count()));
    if (patterns > kMaxSyncPatterns) {
      throw DomainError("enumerate_range: " + std::to_string(patterns) +
                        " drop patterns is too many to enumerate; use Monte Carlo sampling");
    }
    check_range_memory(config, patterns);
    StepOutcome outcome;
    outcome.live_edges.assign(static_cast<std::size_t>(topo.edge_count()), false);
    auto recurse = [&](auto&& self, Index e, double prob) -> void {
      if (e == topo.edge_count()) {
        collector.add(outcome, prob);
        return;
      }
      for (const auto& [live, q] : opts) {
        outcome.live_edges[static_cast<std::size_t>(e)] = live;
        self(self, e + 1, prob * q);
      }
    };
    recurse(recurse, 0, 1.0);
    return collector.take();
  }

  Index max_degree = 0;
  for (Index v = 0; v < topo.node_count(); ++v) max_degree = std::max(max_degree, topo.out_degree(v));
  const double patterns = static_cast<double>(topo.node_count()) * std::pow(per_edge, static_cast<double>(max_degree));
  if (patterns > kMaxAsyncPatterns) {
    throw DomainError("enumerate_range: " + std::to_string(patterns) +
                      " wake/drop patterns is too many to enumerate; use Monte Carlo sampling");
  }
  check_range_memory(config, patterns);
  const double wake = 1.0 / static_cast<double>(topo.node_count());
  for (Index v = 0; v < topo.node_count(); ++v) {
    StepOutcome outcome;
    outcome.woken = v;
    outcome.live_edges.assign(static_cast<std::size_t>(topo.edge_count()), false);
    const auto& out = topo.out_edges(v);
    auto recurse = [&](auto&& self, std::size_t k, double prob) -> void {
      if (k == out.size()) {
        collector.add(outcome, prob);
        return;
      }
      for (const auto& [live, q] : opts) {
        outcome.live_edges[static_cast<std::size_t>(out[k])] = live;
        self(self, k + 1, prob * q);
      }
    };
    recurse(recurse, 0, wake);
  }
  return collector.take();
}

ConditionReport verify_conditions(const ProcessConfig& config, long n_samples, std::uint64_t seed) {
  constexpr long kPsiTrials = 100;
  constexpr long kPsiHorizon = 1000;
  config.validate();
  ConditionReport report;
  // Every generated process draws from finitely many drop/wake patterns on a fixed graph.
  report.finite_range = true;

  bool enumerated = false;
  try {
    const auto range = enumerate_range(config);
    report.alpha_min = std::numeric_limits<double>::infinity();
    report.beta_max = 0.0;
    for (const auto& el : range) {
      const auto [lo, hi] = el.matrix.positive_entry_range();
      report.alpha_min = std::min(report.alpha_min, lo);
      report.beta_max = std::max(report.beta_max, hi);
    }
    report.exact = true;
    report.samples = static_cast<long>(range.size());
    enumerated = true;
  } catch (const DomainError&) {
    enumerated = false;
  }
  if (!enumerated) {
    if (n_samples < 1) throw ConfigError("verify_conditions: need at least one sample");
    ProcessConfig sampled = config;
    sampled.seed = seed;
    GossipStream stream(sampled);
    report.alpha_min = std::numeric_limits<double>::infinity();
    report.beta_max = 0.0;
    for (long k = 0; k < n_samples; ++k) {
      const auto [lo, hi] = stream.next().positive_entry_range();
      report.alpha_min = std::min(report.alpha_min, lo);
      report.beta_max = std::max(report.beta_max, hi);
    }
    report.samples = n_samples;
  }

  long reached = 0;
  double total = 0.0;
  for (long t = 0; t < kPsiTrials; ++t) {
    ProcessConfig trial = config;
    trial.seed = seed;
    GossipStream stream(trial, kTrialStreamBase + static_cast<std::uint64_t>(t));
    if (const auto psi = psi_index(stream, 1, kPsiHorizon)) {
      total += static_cast<double>(*psi);
      ++reached;
    }
  }
  report.psi_trials = kPsiTrials;
  report.psi_not_reached = kPsiTrials - reached;
  if (reached == kPsiTrials) report.psi_expectation_estimate = total / static_cast<double>(kPsiTrials);

  // A finite range bounds positive entries away from 0 and infinity; the
  // remaining requirement is a finite E psi.
  report.bounded_condition = report.finite_range && report.alpha_min > 0.0 &&
                             report.psi_expectation_estimate.has_value();
  return report;
}

}  // namespace pushsum
