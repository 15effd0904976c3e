#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pushsum/experiments.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pushsum;
using nlohmann::json;

namespace {

const std::string kData = PUSHSUM_TEST_DATA;

ExperimentConfig parse(const std::string& text) { return parse_experiment_config(text); }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("slope fitting") {
  LogSeries exact;
  for (int n = 1; n <= 100; ++n) exact.emplace_back(n, -0.3 * n);
  CHECK(fit_slope(exact, 0.0) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(fit_slope(exact, 0.5) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(fit_slope_from(exact, 81.0) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK_THROWS_AS(fit_slope_from(exact, 82.0), EstimatorError);

  Rng rng(1, 0);
  LogSeries noisy;
  const int count = 2000;
  for (int n = 1; n <= count; ++n) noisy.emplace_back(n, -0.3 * n + rng.uniform(-0.5, 0.5));
  CHECK(std::abs(fit_slope(noisy, 0.1) + 0.3) <= 0.3 / std::sqrt(static_cast<double>(count)));

  LogSeries holes = exact;
  for (std::size_t k = 0; k < holes.size(); k += 3) holes[k].second = -INFINITY;
  CHECK(fit_slope(holes, 0.0) == doctest::Approx(-0.3).epsilon(1e-12));

  LogSeries dead;
  for (int n = 1; n <= 100; ++n) dead.emplace_back(n, -INFINITY);
  CHECK_THROWS_AS(fit_slope(dead, 0.0), EstimatorError);
}

TEST_CASE("number formatting round-trips") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.0) == "-2");
  for (const double x : {1.0 / 3.0, 1e-300, 6.02214076e23, -0.000123456789012345678}) {
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("configuration parsing") {
  SUBCASE("full document") {
    const ExperimentConfig c = parse(R"({
      "topology": {"type": "complete", "p": 4},
      "mode": "async", "drop_rate": 0.25, "s": 0.5, "steps": 3000, "seed": 9,
      "x0": [1, 2, 3, 4], "w0": "sum", "target": "general",
      "estimators": ["qr", "compound"], "birkhoff_samples": 50, "output_path": "out.json"})");
    CHECK(c.process.topology.node_count() == 4);
    CHECK(c.process.topology.edge_count() == 12);
    CHECK(c.process.mode == Mode::Async);
    CHECK(c.process.drop_rate == 0.25);
    CHECK(c.process.s.value() == 0.5);
    CHECK(c.n_steps == 3000);
    CHECK(c.process.seed == 9);
    CHECK(c.x0.kind == InitialVector::Kind::Explicit);
    CHECK(c.x0.values.size() == 4);
    CHECK(c.w0.kind == InitialVector::Kind::Sum);
    CHECK(c.general_target);
    CHECK(c.uses(Estimator::Compound));
    CHECK_FALSE(c.uses(Estimator::Birkhoff));
    CHECK(c.birkhoff_samples == 50);
    CHECK(c.output_path == "out.json");
  }
  SUBCASE("defaults and classic packets") {
    const ExperimentConfig c = parse(R"({"s": "classic", "seed": 4})");
    CHECK(c.process.s.is_classic());
    CHECK(c.process.topology.node_count() == 5);
    CHECK(c.process.topology.edges() == random_regular_out_digraph(5, 2, 4).edges());
    CHECK(c.w0.kind == InitialVector::Kind::Average);
  }
  SUBCASE("edge list relative to the config file") {
    const ExperimentConfig c = load_experiment_config(kData + "/ring_edges.json");
    CHECK(c.process.topology.node_count() == 4);
    CHECK(c.process.topology.edge_count() == 5);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse("{"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"drop_rates": 0.1})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"drop_rate": "high"})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"drop_rate": 1.5})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"mode": "poisson"})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"s": 0})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"x0": "average"})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"estimators": ["svd"]})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"topology": {"type": "torus"}})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"topology": {"type": "random_regular_out", "p": 5, "d": 5}})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"target": "median"})"), ConfigError);
    CHECK_THROWS_AS(load_experiment_config(kData + "/no_such_file.json"), ConfigError);
    CHECK_THROWS_AS(load_experiment_config(kData + "/bad_key.json"), ConfigError);
  }
}

TEST_CASE("initial vectors") {
  Rng rng(1, 0);
  CHECK(InitialVector{InitialVector::Kind::Average, {}}.resolve(3, rng) == Vector::Ones(3));
  const Vector e1 = InitialVector{InitialVector::Kind::Sum, {}}.resolve(3, rng);
  CHECK(e1(0) == 1.0);
  CHECK(e1.tail(2).isZero());
  const Vector r = InitialVector{InitialVector::Kind::RandomPositive, {}}.resolve(50, rng);
  CHECK(r.minCoeff() >= 0.5);
  CHECK(r.maxCoeff() < 1.5);
}

TEST_CASE("rate experiment on a constant no-drop process") {
  ExperimentConfig c = parse(R"({"topology": {"type": "complete", "p": 4}, "mode": "sync", "drop_rate": 0,
                                 "s": 0.5, "steps": 20000, "seed": 3})");
  // Eigenvalues of the single lifted matrix.
  GossipStream g(c.process);
  Eigen::EigenSolver<Matrix> es(g.next().entries());
  std::vector<double> mu;
  for (Index k = 0; k < es.eigenvalues().size(); ++k) mu.push_back(std::abs(es.eigenvalues()(k)));
  std::sort(mu.rbegin(), mu.rend());
  const double expected = std::log(mu[0] / mu[1]);
  CHECK(expected == doctest::Approx(std::log(3.0)).epsilon(1e-9));

  const RateReport r = run_rate_experiment(c);
  REQUIRE(r.gap_qr);
  CHECK(std::abs(*r.gap_qr - expected) <= 1e-3);
  CHECK(std::abs(*r.lambda1) <= 1e-3);
  REQUIRE(r.gap_birkhoff);
  CHECK(std::abs(*r.gap_birkhoff - expected) <= 1e-2);
  CHECK(r.final_max_ratio_error <= 1e-12);
}

TEST_CASE("weight presets select average or sum") {
  for (const char* w0 : {"average", "sum"}) {
    ExperimentConfig c = parse(std::string(R"({"drop_rate": 0.3, "steps": 3000, "seed": 2, "x0": [1, 2, 3, 4, 10],
                                              "estimators": ["qr"], "w0": ")") + w0 + "\"}");
    const RateReport r = run_rate_experiment(c);
    CHECK(r.target == (std::string(w0) == "sum" ? 20.0 : 4.0));
    CHECK(r.final_max_ratio_error <= 1e-6);
  }
}

TEST_CASE("general target agrees with the mass ratio on column-stochastic runs") {
  ExperimentConfig c = parse(R"({"topology": {"type": "random_regular_out", "p": 8, "d": 2}, "mode": "async",
                                 "drop_rate": 0.2, "steps": 3000, "seed": 5, "x0": [2, 1, 1, 1, 5, 1, 2, 3],
                                 "w0": "average", "target": "general", "estimators": ["qr", "empirical"]})");
  const RateReport r = run_rate_experiment(c);
  CHECK(r.target == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(*r.lambda1) <= 1e-3);
  REQUIRE(r.slope_ratio_error);
  CHECK(std::abs(-*r.slope_ratio_error - *r.gap_qr) / *r.gap_qr <= 0.15);
}

TEST_CASE("rate experiment guards") {
  ExperimentConfig c = small_sync_preset();
  c.process.drop_rate = 1.0;
  CHECK_THROWS_AS(run_rate_experiment(c), DegenerateProcessError);
  ExperimentConfig short_run = small_sync_preset();
  short_run.n_steps = 500;
  CHECK_THROWS_AS(run_rate_experiment(short_run), ConfigError);
}

TEST_CASE("rate report json") {
  ExperimentConfig c = small_sync_preset(2);
  c.n_steps = 4000;
  c.estimators = {Estimator::Qr, Estimator::Birkhoff, Estimator::Empirical, Estimator::Compound};
  const RateReport r = run_rate_experiment(c);
  const json j = json::parse(rate_report_json(r));
  CHECK(j["gap_qr"].get<double>() == *r.gap_qr);
  CHECK(j["seed"] == 2);
  CHECK(j["agreement"].contains("qr_vs_birkhoff"));
  CHECK(j["agreement"]["qr_sum_vs_compound"].get<double>() <= 1e-2);
  CHECK(j["diagnostics"]["windows"].size() == r.windows.size());
  CHECK(rate_report_json(run_rate_experiment(c)) == rate_report_json(r));
}

TEST_CASE("trajectory csv") {
  ExperimentConfig c = small_sync_preset();
  c.n_steps = 100;
  std::ostringstream os;
  write_trajectory_csv(os, c, {10});
  const auto lines = lines_of(os.str());
  REQUIRE(lines.size() == 11);
  CHECK(lines[0] == "step,max_ratio_error,tv,mass_x,mass_w");
  CHECK(lines[1].rfind("10,", 0) == 0);
  CHECK(lines[10].rfind("100,", 0) == 0);
}

TEST_CASE("lyapunov report") {
  ExperimentConfig c = small_sync_preset(3);
  c.n_steps = 4000;
  const LyapunovReport r = run_lyapunov(c);
  CHECK(std::abs(r.qr.lambda1) <= 1e-3);
  const json j = json::parse(lyapunov_report_json(r));
  CHECK(j["gap"].get<double>() == *r.qr.gap);
}

TEST_CASE("sweeps") {
  ExperimentConfig base = small_sync_preset();
  base.n_steps = 5000;
  SUBCASE("drop-rate grid") {
    const auto rows = sweep(base, SweepParameter::DropRate, {0.0, 0.25, 0.5}, {1}, {1, false});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].param_value == 0.0);
    CHECK(rows[2].param_value == 0.5);
    CHECK(rows[0].param_name == "drop_rate");
    CHECK(*rows[0].gap_qr >= *rows[2].gap_qr);
    const auto lines = lines_of(sweep_csv(rows));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == kSweepHeader);
    CHECK(lines[1].rfind("drop_rate,0,1,", 0) == 0);
    CHECK(lines[1].substr(lines[1].size() - 7) == ",5000,0");
  }
  SUBCASE("grid-then-seed order regardless of threads") {
    const auto one = sweep_csv(sweep(base, SweepParameter::PacketFraction, {0.3, 0.9}, {1, 2}, {1, false}));
    const auto two = sweep_csv(sweep(base, SweepParameter::PacketFraction, {0.3, 0.9}, {1, 2}, {2, false}));
    CHECK(one == two);
    const auto lines = lines_of(one);
    REQUIRE(lines.size() == 5);
    CHECK(lines[1].rfind("s,0.3,1,", 0) == 0);
    CHECK(lines[2].rfind("s,0.3,2,", 0) == 0);
    CHECK(lines[3].rfind("s,0.9,1,", 0) == 0);
  }
  SUBCASE("empty grid") {
    CHECK(sweep_csv(sweep(base, SweepParameter::DropRate, {}, {1})) == std::string(kSweepHeader) + "\n");
  }
  SUBCASE("grid outside the domain") {
    CHECK_THROWS_AS(sweep(base, SweepParameter::DropRate, {1.0}, {1}), ConfigError);
    CHECK_THROWS_AS(sweep(base, SweepParameter::PacketFraction, {0.0}, {1}), ConfigError);
    CHECK_THROWS_AS(parse_sweep_parameter("size"), ConfigError);
  }
}

TEST_CASE("hypothesis check") {
  SUBCASE("pair with half drops") {
    const ExperimentConfig c = parse(R"({"topology": {"type": "complete", "p": 2}, "mode": "sync",
                                         "drop_rate": 0.5, "s": 0.5})");
    const CheckReport r = run_check(c);
    CHECK(r.hypotheses_hold);
    CHECK(r.nodes.real_nodes == std::vector<Index>{0, 1});
    CHECK(r.nodes.virtual_nodes == std::vector<Index>{2, 3});
    const std::string text = check_report_text(r);
    CHECK(text.find("bounded condition: proven (finite range)") != std::string::npos);
    CHECK(text.find("real nodes: {0, 1}") != std::string::npos);
    CHECK(text.find("virtual nodes: {2, 3}") != std::string::npos);
    CHECK(text.find("verdict: hypotheses satisfied") != std::string::npos);
    const json j = json::parse(check_report_json(r));
    CHECK(j["alpha_min"].get<double>() == 0.5);
    CHECK(j["hypotheses_hold"].get<bool>());
  }
  SUBCASE("reference network") {
    ExperimentConfig c = reference_async_preset();
    c.process.drop_rate = 0.3;
    const CheckReport r = run_check(c);
    CHECK(r.conditions.bounded_condition);
    CHECK(r.hypotheses_hold);
    CHECK(r.nodes.real_nodes.size() == 30);
    CHECK(r.nodes.virtual_nodes.size() == 300);
  }
  SUBCASE("degenerate process") {
    ExperimentConfig c = small_sync_preset();
    c.process.drop_rate = 1.0;
    const CheckReport r = run_check(c);
    CHECK(r.degenerate);
    CHECK_FALSE(r.hypotheses_hold);
    CHECK(check_report_text(r).find("weak primitivity: not reached") != std::string::npos);
  }
  SUBCASE("a process that never mixes") {
    CheckReport r;
    r.horizon = 1000;
    CHECK(check_report_text(r).find("weak primitivity: not reached within 1000 steps") != std::string::npos);
  }
}
