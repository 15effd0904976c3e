#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pushsum/process.hpp"

#include <cmath>
#include <set>

using namespace pushsum;

namespace {

ProcessConfig config(NetworkTopology t, Mode mode, double drop, PacketFraction s = PacketFraction::classic(),
                     std::uint64_t seed = 1) {
  ProcessConfig c{std::move(t)};
  c.mode = mode;
  c.drop_rate = drop;
  c.s = s;
  c.seed = seed;
  return c;
}

NetworkTopology pair_topology() { return NetworkTopology(2, {{0, 1}, {1, 0}}); }

}  // namespace

TEST_CASE("random regular out-digraphs") {
  const NetworkTopology t = random_regular_out_digraph(30, 10, 1);
  CHECK(t.node_count() == 30);
  CHECK(t.edge_count() == 300);
  for (Index v = 0; v < 30; ++v) {
    CHECK(t.out_degree(v) == 10);
    const auto nb = t.out_neighbors(v);
    CHECK(std::set<Index>(nb.begin(), nb.end()).size() == 10);
    CHECK(std::find(nb.begin(), nb.end(), v) == nb.end());
  }
  CHECK(strongly_connected(t));
  CHECK(random_regular_out_digraph(30, 10, 1).edges() == t.edges());
  CHECK(random_regular_out_digraph(30, 10, 2).edges() != t.edges());

  const NetworkTopology pair = random_regular_out_digraph(2, 1, 9);
  CHECK(pair.edges() == pair_topology().edges());

  CHECK_THROWS_AS(random_regular_out_digraph(5, 5, 1), ConfigError);
  CHECK_THROWS_AS(random_regular_out_digraph(5, 0, 1), ConfigError);
  CHECK_THROWS_AS(random_regular_out_digraph(1, 1, 1), ConfigError);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) REQUIRE(strongly_connected(random_regular_out_digraph(5, 2, seed)));
}

TEST_CASE("out-neighbours are spread uniformly") {
  // Each of the other 4 nodes is chosen with probability 1/2 by a node with d = 2.
  std::vector<long> hits(5, 0);
  const int draws = 4000;
  for (int k = 0; k < draws; ++k) {
    for (const Index j : random_regular_out_digraph(5, 2, 10000 + static_cast<std::uint64_t>(k)).out_neighbors(0)) {
      ++hits[static_cast<std::size_t>(j)];
    }
  }
  CHECK(hits[0] == 0);
  // Conditioning on strong connectivity is symmetric in the other nodes.
  for (std::size_t j = 1; j < 5; ++j) CHECK(std::abs(hits[j] - draws / 2.0) <= 3.0 * std::sqrt(draws * 0.25));
}

TEST_CASE("sampled step matrices") {
  SUBCASE("no drops: one matrix") {
    const ProcessConfig c = config(random_regular_out_digraph(5, 2, 1), Mode::Sync, 0.0);
    Rng rng(1, kProcessStream);
    const NonNegMatrix first = sample_step_matrix(c, rng).first;
    for (int k = 0; k < 50; ++k) REQUIRE(sample_step_matrix(c, rng).first == first);
  }
  SUBCASE("all drops: the absorbing matrix") {
    const ProcessConfig c = config(pair_topology(), Mode::Sync, 1.0, PacketFraction::fixed(0.5));
    Rng rng(1, kProcessStream);
    for (int k = 0; k < 50; ++k) {
      const auto [a, o] = sample_step_matrix(c, rng);
      REQUIRE(a.entries()(0, 0) == 0.5);
      REQUIRE(a.entries()(2, 2) == 1.0);
      REQUIRE(!o.live_edges[0]);
      REQUIRE(!o.live_edges[1]);
    }
  }
  SUBCASE("invalid drop rate") {
    const ProcessConfig c = config(pair_topology(), Mode::Sync, 1.5);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_CASE("gossip streams are reproducible") {
  const ProcessConfig c = config(random_regular_out_digraph(6, 2, 3), Mode::Async, 0.3, PacketFraction::classic(), 3);
  GossipStream a(c);
  GossipStream b(c);
  GossipStream other(c, kProcessStream + 7);
  bool differs = false;
  for (int k = 0; k < 200; ++k) {
    const NonNegMatrix x = a.next();
    REQUIRE(x == b.next());
    differs = differs || !(x == other.next());
  }
  CHECK(differs);
  CHECK(a.dim() == 6 + 12);
}

TEST_CASE("finite range") {
  SUBCASE("pair, sync, half drops") {
    const auto range = enumerate_range(config(pair_topology(), Mode::Sync, 0.5, PacketFraction::fixed(0.5)));
    REQUIRE(range.size() == 4);
    for (const auto& r : range) CHECK(r.probability == 0.25);
  }
  SUBCASE("no drops is a singleton") {
    const auto range = enumerate_range(config(random_regular_out_digraph(5, 2, 1), Mode::Sync, 0.0));
    REQUIRE(range.size() == 1);
    CHECK(range[0].probability == 1.0);
  }
  SUBCASE("complete triangle, async, no drops") {
    const auto range = enumerate_range(config(complete_digraph(3), Mode::Async, 0.0));
    REQUIRE(range.size() == 3);
    for (const auto& r : range) CHECK(r.probability == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("probabilities sum to one") {
    const auto range = enumerate_range(config(random_regular_out_digraph(4, 2, 2), Mode::Async, 0.3));
    double total = 0.0;
    for (const auto& r : range) total += r.probability;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(range.size() == 16);
  }
  SUBCASE("too large") {
    CHECK_THROWS_AS(enumerate_range(config(random_regular_out_digraph(30, 10, 1), Mode::Sync, 0.3)), DomainError);
  }
}

TEST_CASE("sampling frequencies match the enumerated probabilities") {
  const ProcessConfig c = config(random_regular_out_digraph(4, 2, 5), Mode::Sync, 0.3);
  const auto range = enumerate_range(c);
  std::vector<long> counts(range.size(), 0);
  Rng rng(5, kProcessStream);
  const long n = 20000;
  for (long k = 0; k < n; ++k) {
    const NonNegMatrix a = sample_step_matrix(c, rng).first;
    std::size_t hit = range.size();
    for (std::size_t r = 0; r < range.size(); ++r) {
      if (range[r].matrix == a) hit = r;
    }
    REQUIRE(hit < range.size());
    ++counts[hit];
  }
  for (std::size_t r = 0; r < range.size(); ++r) {
    const double q = range[r].probability;
    CHECK(std::abs(static_cast<double>(counts[r]) - n * q) <= 3.0 * std::sqrt(n * q * (1.0 - q)) + 1.0);
  }
}

TEST_CASE("boundedness conditions") {
  SUBCASE("pair with half drops and s = 1/2") {
    const ConditionReport r =
        verify_conditions(config(pair_topology(), Mode::Sync, 0.5, PacketFraction::fixed(0.5)), 1000, 1);
    CHECK(r.exact);
    CHECK(r.finite_range);
    // Entries are 1/2 (kept and sent shares) and 1 (buffer flush or retention).
    CHECK(r.alpha_min == 0.5);
    CHECK(r.beta_max == 1.0);
    CHECK(r.bounded_condition);
    REQUIRE(r.psi_expectation_estimate.has_value());
    CHECK(*r.psi_expectation_estimate >= 1.0);
    CHECK(r.psi_not_reached == 0);
  }
  SUBCASE("sampled when the range is too large") {
    const ConditionReport r =
        verify_conditions(config(random_regular_out_digraph(30, 10, 1), Mode::Async, 0.2), 500, 1);
    CHECK_FALSE(r.exact);
    CHECK(r.samples == 500);
    CHECK(r.alpha_min == doctest::Approx(1.0 / 11.0));
    CHECK(r.beta_max == 1.0);
    CHECK(r.alpha_min <= r.beta_max);
  }
  SUBCASE("alpha equals the smallest positive entry of the range") {
    const ProcessConfig c = config(random_regular_out_digraph(5, 3, 4), Mode::Sync, 0.2, PacketFraction::fixed(0.9));
    const ConditionReport r = verify_conditions(c, 100, 4);
    double lo = 1.0;
    for (const auto& e : enumerate_range(c)) lo = std::min(lo, e.matrix.positive_entry_range()[0]);
    CHECK(r.alpha_min == lo);
  }
  SUBCASE("deterministic") {
    const ProcessConfig c = config(random_regular_out_digraph(5, 2, 6), Mode::Sync, 0.4);
    const ConditionReport a = verify_conditions(c, 100, 6);
    const ConditionReport b = verify_conditions(c, 100, 6);
    CHECK(a.psi_expectation_estimate == b.psi_expectation_estimate);
  }
}
