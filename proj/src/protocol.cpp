#include "pushsum/protocol.hpp"

#include "pushsum/stream.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pushsum {

NetworkTopology::NetworkTopology(Index node_count, const std::vector<Edge>& edges) : node_count_(node_count) {
  if (node_count < 2) throw ConfigError("topology needs at least 2 nodes (every node must have an out-edge)");
  std::set<std::pair<Index, Index>> seen;
  for (const Edge& e : edges) {
    if (e.from < 0 || e.to < 0 || e.from >= node_count || e.to >= node_count) {
      throw ConfigError("edge (" + std::to_string(e.from) + "," + std::to_string(e.to) + ") out of range");
    }
    if (e.from == e.to) throw ConfigError("self-loop on node " + std::to_string(e.from));
    if (!seen.insert({e.from, e.to}).second) {
      throw ConfigError("duplicate edge (" + std::to_string(e.from) + "," + std::to_string(e.to) + ")");
    }
  }
  edges_ = edges;
  std::stable_sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) { return a.from < b.from; });
  out_edges_.resize(static_cast<std::size_t>(node_count));
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    out_edges_[static_cast<std::size_t>(edges_[k].from)].push_back(static_cast<Index>(k));
  }
  for (Index v = 0; v < node_count; ++v) {
    if (out_edges_[static_cast<std::size_t>(v)].empty()) {
      throw ConfigError("node " + std::to_string(v) + " has no out-edge");
    }
  }
}

std::vector<Index> NetworkTopology::out_neighbors(Index node) const {
  std::vector<Index> out;
  for (const Index e : out_edges(node)) out.push_back(edge(e).to);
  return out;
}

std::optional<Index> NetworkTopology::edge_ordinal(Index from, Index to) const {
  if (from < 0 || from >= node_count_) return std::nullopt;
  for (const Index e : out_edges(from)) {
    if (edge(e).to == to) return e;
  }
  return std::nullopt;
}

std::vector<Index> NetworkTopology::in_degrees() const {
  std::vector<Index> deg(static_cast<std::size_t>(node_count_), 0);
  for (const Edge& e : edges_) ++deg[static_cast<std::size_t>(e.to)];
  return deg;
}

NetworkTopology parse_edge_list(std::istream& in, std::optional<Index> node_count) {
  std::vector<Edge> edges;
  Index max_id = -1;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    long long a = 0;
    long long b = 0;
    if (!(ls >> a)) continue;
    std::string rest;
    if (!(ls >> b) || (ls >> rest)) {
      throw ConfigError("edge list line " + std::to_string(line_no) + ": expected two node ids");
    }
    edges.push_back({static_cast<Index>(a), static_cast<Index>(b)});
    max_id = std::max({max_id, static_cast<Index>(a), static_cast<Index>(b)});
  }
  return NetworkTopology(node_count.value_or(max_id + 1), edges);
}

NetworkTopology read_edge_list(const std::string& path, std::optional<Index> node_count) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open edge list '" + path + "'");
  return parse_edge_list(in, node_count);
}

bool strongly_connected(const NetworkTopology& topology) {
  const Index p = topology.node_count();
  auto reach_all = [p](const std::vector<std::vector<Index>>& adj) {
    std::vector<bool> seen(static_cast<std::size_t>(p), false);
    std::vector<Index> stack{0};
    seen[0] = true;
    Index count = 1;
    while (!stack.empty()) {
      const Index v = stack.back();
      stack.pop_back();
      for (const Index u : adj[static_cast<std::size_t>(v)]) {
        if (!seen[static_cast<std::size_t>(u)]) {
          seen[static_cast<std::size_t>(u)] = true;
          ++count;
          stack.push_back(u);
        }
      }
    }
    return count == p;
  };
  std::vector<std::vector<Index>> fwd(static_cast<std::size_t>(p));
  std::vector<std::vector<Index>> rev(static_cast<std::size_t>(p));
  for (const Edge& e : topology.edges()) {
    fwd[static_cast<std::size_t>(e.from)].push_back(e.to);
    rev[static_cast<std::size_t>(e.to)].push_back(e.from);
  }
  return reach_all(fwd) && reach_all(rev);
}

AugmentedIndex build_augmented(const NetworkTopology& topology) {
  AugmentedIndex idx;
  idx.p_real = topology.node_count();
  idx.n_buffers = topology.edge_count();
  idx.dim = idx.p_real + idx.n_buffers;
  return idx;
}

PacketFraction PacketFraction::fixed(double s) {
  if (!(s > 0.0 && s <= 1.0)) throw ConfigError("packet fraction s must lie in (0, 1]");
  PacketFraction f;
  f.fixed_ = s;
  return f;
}

double PacketFraction::value() const {
  if (!fixed_) throw ConfigError("classic packet fraction has no single value");
  return *fixed_;
}

// Taken as the remainder after the shares so that each column of the step
// matrix sums to 1 in floating point; 1/(d+1) rounded on its own loses mass
// at every step.
double PacketFraction::keep(Index degree) const {
  return std::max(0.0, 1.0 - static_cast<double>(degree) * share(degree));
}

double PacketFraction::share(Index degree) const {
  if (!fixed_) return 1.0 / static_cast<double>(degree + 1);
  return *fixed_ / static_cast<double>(degree);
}

std::string PacketFraction::describe() const {
  if (!fixed_) return "classic";
  std::ostringstream os;
  os.precision(17);
  os << *fixed_;
  return os.str();
}

ProtocolState make_state(const NetworkTopology& topology, const Vector& x0, const Vector& w0) {
  const AugmentedIndex idx = build_augmented(topology);
  auto lift = [&](const Vector& v, const char* name) {
    if (v.size() == idx.p_real) {
      Vector out = Vector::Zero(idx.dim);
      out.head(idx.p_real) = v;
      return out;
    }
    if (v.size() == idx.dim) {
      if (idx.n_buffers > 0 && v.tail(idx.n_buffers).cwiseAbs().maxCoeff() != 0.0) {
        throw ConfigError(std::string(name) + " must be zero on buffer coordinates");
      }
      return v;
    }
    throw ConfigError(std::string(name) + " has length " + std::to_string(v.size()) + ", expected " +
                      std::to_string(idx.p_real) + " or " + std::to_string(idx.dim));
  };
  ProtocolState s;
  s.x = lift(x0, "x0");
  s.w = lift(w0, "w0");
  if (!s.x.allFinite()) throw ConfigError("x0 must be finite");
  if (!s.w.allFinite() || (s.w.array() < 0.0).any() || !(s.w.maxCoeff() > 0.0)) {
    throw ConfigError("w0 must be nonnegative and nonzero");
  }
  return s;
}

namespace {

void check_dims(const NetworkTopology& topology, const ProtocolState& state) {
  const Index dim = topology.node_count() + topology.edge_count();
  if (state.x.size() != dim || state.w.size() != dim) throw DomainError("protocol step: state dimension mismatch");
}

// Sends from `node`: keep (1-s), push s/d into each out-buffer and flush live ones.
void send_from(const NetworkTopology& topology, Index node, const Vector& in, Vector& out,
               const std::vector<bool>& live_of_edge, const PacketFraction& s) {
  const Index p = topology.node_count();
  const Index d = topology.out_degree(node);
  const double keep = s.keep(d);
  const double share = s.share(d);
  const double mass = in(node);
  out(node) = keep * mass;
  for (const Index e : topology.out_edges(node)) {
    const Index b = p + e;
    const double content = in(b) + share * mass;
    if (live_of_edge[static_cast<std::size_t>(e)]) {
      out(topology.edge(e).to) += content;
      out(b) = 0.0;
    } else {
      out(b) = content;
    }
  }
}

}  // namespace

ProtocolState step_synchronous(const NetworkTopology& topology, const ProtocolState& state, const EdgeMask& live,
                               const PacketFraction& s) {
  check_dims(topology, state);
  if (static_cast<Index>(live.size()) != topology.edge_count()) throw DomainError("step_synchronous: mask size");
  const Index p = topology.node_count();
  ProtocolState next;
  next.step = state.step + 1;
  for (const auto* v : {&state.x, &state.w}) {
    Vector out = Vector::Zero(v->size());
    for (Index i = 0; i < p; ++i) out(i) = s.keep(topology.out_degree(i)) * (*v)(i);
    for (Index e = 0; e < topology.edge_count(); ++e) {
      const Edge& ed = topology.edge(e);
      const double content = (*v)(p + e) + s.share(topology.out_degree(ed.from)) * (*v)(ed.from);
      if (live[static_cast<std::size_t>(e)]) {
        out(ed.to) += content;
      } else {
        out(p + e) = content;
      }
    }
    (v == &state.x ? next.x : next.w) = std::move(out);
  }
  return next;
}

ProtocolState step_asynchronous(const NetworkTopology& topology, const ProtocolState& state, Index woken,
                                const EdgeMask& live_out, const PacketFraction& s) {
  check_dims(topology, state);
  if (woken < 0 || woken >= topology.node_count()) throw DomainError("step_asynchronous: invalid woken node");
  const auto& out_edges = topology.out_edges(woken);
  if (live_out.size() != out_edges.size()) throw DomainError("step_asynchronous: mask size");
  EdgeMask live(static_cast<std::size_t>(topology.edge_count()), false);
  for (std::size_t k = 0; k < out_edges.size(); ++k) live[static_cast<std::size_t>(out_edges[k])] = live_out[k];

  ProtocolState next{state.x, state.w, state.step + 1};
  send_from(topology, woken, state.x, next.x, live, s);
  send_from(topology, woken, state.w, next.w, live, s);
  return next;
}

StepOutcome draw_outcome(const NetworkTopology& topology, Mode mode, double drop_rate, Rng& rng) {
  StepOutcome out;
  out.live_edges.assign(static_cast<std::size_t>(topology.edge_count()), false);
  if (mode == Mode::Sync) {
    for (Index e = 0; e < topology.edge_count(); ++e) {
      out.live_edges[static_cast<std::size_t>(e)] = !rng.bernoulli(drop_rate);
    }
  } else {
    const auto woken = static_cast<Index>(rng.below(static_cast<std::uint64_t>(topology.node_count())));
    out.woken = woken;
    for (const Index e : topology.out_edges(woken)) out.live_edges[static_cast<std::size_t>(e)] = !rng.bernoulli(drop_rate);
  }
  return out;
}

ProtocolState apply_outcome(const NetworkTopology& topology, const ProtocolState& state, const StepOutcome& outcome,
                            const PacketFraction& s) {
  if (!outcome.woken) return step_synchronous(topology, state, outcome.live_edges, s);
  EdgeMask live_out;
  for (const Index e : topology.out_edges(*outcome.woken)) live_out.push_back(outcome.live_edges[static_cast<std::size_t>(e)]);
  return step_asynchronous(topology, state, *outcome.woken, live_out, s);
}

NonNegMatrix as_matrix(const NetworkTopology& topology, const StepOutcome& outcome, const PacketFraction& s, Mode mode) {
  const Index p = topology.node_count();
  const Index dim = p + topology.edge_count();
  if (static_cast<Index>(outcome.live_edges.size()) != topology.edge_count()) {
    throw DomainError("as_matrix: live mask size");
  }
  if ((mode == Mode::Async) != outcome.woken.has_value()) throw DomainError("as_matrix: outcome does not match mode");

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(dim + 2 * topology.edge_count()));
  auto sender_columns = [&](Index i) {
    const Index d = topology.out_degree(i);
    const double keep = s.keep(d);
    const double share = s.share(d);
    if (keep > 0.0) t.emplace_back(i, i, keep);
    for (const Index e : topology.out_edges(i)) {
      const Index b = p + e;
      if (outcome.live_edges[static_cast<std::size_t>(e)]) {
        const Index j = topology.edge(e).to;
        t.emplace_back(j, i, share);
        t.emplace_back(j, b, 1.0);
      } else {
        t.emplace_back(b, i, share);
        t.emplace_back(b, b, 1.0);
      }
    }
  };

  if (mode == Mode::Sync) {
    for (Index i = 0; i < p; ++i) sender_columns(i);
  } else {
    const Index w = *outcome.woken;
    std::vector<bool> touched(static_cast<std::size_t>(dim), false);
    touched[static_cast<std::size_t>(w)] = true;
    for (const Index e : topology.out_edges(w)) touched[static_cast<std::size_t>(p + e)] = true;
    for (Index c = 0; c < dim; ++c) {
      if (!touched[static_cast<std::size_t>(c)]) t.emplace_back(c, c, 1.0);
    }
    sender_columns(w);
  }
  return NonNegMatrix::from_triplets(dim, dim, t);
}

std::vector<std::optional<double>> ratios(const ProtocolState& state, Index p_real) {
  std::vector<std::optional<double>> out(static_cast<std::size_t>(p_real));
  for (Index i = 0; i < p_real; ++i) {
    if (state.w(i) > 0.0) out[static_cast<std::size_t>(i)] = state.x(i) / state.w(i);
  }
  return out;
}

Trajectory run_consensus(const NetworkTopology& topology, const Vector& x0, const Vector& w0, long n_steps,
                         std::uint64_t seed, double drop_rate, const PacketFraction& s, Mode mode) {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) throw ConfigError("drop_rate must lie in [0, 1]");
  if (n_steps < 0) throw ConfigError("n_steps must be nonnegative");
  ProtocolState state = make_state(topology, x0, w0);
  const Index p = topology.node_count();

  Trajectory traj;
  traj.target = state.x.sum() / state.w.sum();
  traj.points.reserve(static_cast<std::size_t>(n_steps));
  Rng rng(seed, kProcessStream);
  for (long n = 1; n <= n_steps; ++n) {
    const StepOutcome outcome = draw_outcome(topology, mode, drop_rate, rng);
    state = apply_outcome(topology, state, outcome, s);

    TrajectoryPoint pt;
    pt.step = n;
    pt.mass_x = state.x.sum();
    pt.mass_w = state.w.sum();
    for (const auto& r : ratios(state, p)) {
      if (r) pt.max_ratio_error = std::max(pt.max_ratio_error.value_or(0.0), std::abs(*r - traj.target));
    }
    if ((state.x.array() >= 0.0).all() && pt.mass_x > 0.0) {
      pt.tv = tv_distance(state.x / pt.mass_x, state.w / pt.mass_w);
    }
    traj.points.push_back(pt);
  }
  traj.final_state = std::move(state);
  return traj;
}

}  // namespace pushsum
