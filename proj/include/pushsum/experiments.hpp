#pragma once

// End-to-end rate experiments: one matrix stream feeds the QR, Birkhoff,
// compound and empirical estimators, then parameter sweeps and the
// hypothesis check build on that.

#include "pushsum/lyapunov.hpp"
#include "pushsum/primitivity.hpp"
#include "pushsum/process.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pushsum {

/// (step, log value) pairs.
using LogSeries = std::vector<std::pair<double, double>>;

inline constexpr std::size_t kMinSlopePoints = 20;

/// OLS slope of the series after dropping the leading burn_in_fraction of
/// points and every non-finite value. Throws EstimatorError with fewer than
/// kMinSlopePoints survivors.
double fit_slope(const LogSeries& series, double burn_in_fraction);
/// Same, keeping only points with step >= min_step.
double fit_slope_from(const LogSeries& series, double min_step);

struct TopologyConfig {
  std::string type = "random_regular_out";
  Index p = 5;
  Index d = 2;
  std::string path;
};

/// An initial vector on real nodes, either given or generated.
struct InitialVector {
  enum class Kind { Explicit, Average, Sum, RandomPositive };
  Kind kind = Kind::RandomPositive;
  Vector values;

  /// Materialises on p real nodes; random entries are drawn uniformly in [1/2, 3/2).
  /// Explicit values are returned unchanged.
  Vector resolve(Index p, Rng& rng) const;
  std::string describe() const;
};

enum class Estimator { Qr, Birkhoff, Empirical, Compound };

struct ExperimentConfig {
  TopologyConfig topology;
  ProcessConfig process{random_regular_out_digraph(5, 2, 0)};
  long n_steps = 20000;
  InitialVector x0{InitialVector::Kind::RandomPositive, {}};
  InitialVector w0{InitialVector::Kind::Average, {}};
  std::vector<Estimator> estimators{Estimator::Qr, Estimator::Birkhoff, Estimator::Empirical};
  /// Target v1'x0 / v1'w0 with v1 from the rank-one part of M_n instead of the mass ratio.
  bool general_target = false;
  long birkhoff_samples = 400;
  std::string output_path;

  bool uses(Estimator e) const;
  /// Rebuilds process.topology from the topology settings and the current seed.
  void rebuild_topology();
};

/// Parses the JSON configuration; throws ConfigError on bad input. A relative
/// edge-list path is resolved against base_dir.
ExperimentConfig parse_experiment_config(std::string_view json_text, const std::string& base_dir = "");
ExperimentConfig load_experiment_config(const std::string& path);

/// The 30-node, out-degree-10 asynchronous network with classic packets.
ExperimentConfig reference_async_preset(std::uint64_t seed = 1);
/// 5 nodes, out-degree 2, synchronous, drop 0.2, classic packets.
ExperimentConfig small_sync_preset(std::uint64_t seed = 1);

struct RateReport {
  std::uint64_t seed = 0;
  long n_steps = 0;
  Index dim = 0;
  double target = 0.0;

  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> gap_qr;
  std::optional<double> gap_birkhoff;
  std::optional<double> sum_top2_compound;
  std::optional<double> slope_tv;
  std::optional<double> slope_ratio_error;
  /// Pairwise relative differences among gap magnitudes that are available.
  std::map<std::string, double> agreement;

  long burn_in = 0;
  std::optional<long> weak_primitivity_time;
  std::vector<WindowEstimate> windows;
  long rank_deficient_steps = 0;
  std::string birkhoff_method;
  long birkhoff_points = 0;
  double final_max_ratio_error = 0.0;
  /// One line per estimator that could not produce a value.
  std::vector<std::string> failures;
  bool not_primitive = false;
};

/// Runs one trajectory and every requested estimator on it. Deterministic
/// given the config. Throws DegenerateProcessError at drop_rate = 1.
RateReport run_rate_experiment(const ExperimentConfig& config);

std::string rate_report_json(const RateReport& report);

struct TrajectoryOptions {
  long every = 1;
};

/// Plain consensus run as CSV: step,max_ratio_error,tv,mass_x,mass_w.
void write_trajectory_csv(std::ostream& out, const ExperimentConfig& config, const TrajectoryOptions& options = {});

struct LyapunovReport {
  LyapunovEstimate qr;
  std::optional<CompoundEstimate> compound;
};

LyapunovReport run_lyapunov(const ExperimentConfig& config);
std::string lyapunov_report_json(const LyapunovReport& report);

enum class SweepParameter { DropRate, PacketFraction };

std::string_view to_string(SweepParameter param);
SweepParameter parse_sweep_parameter(std::string_view name);

struct SweepRow {
  std::string param_name;
  double param_value = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> gap_qr;
  std::optional<double> gap_birkhoff;
  std::optional<double> slope_tv;
  std::optional<double> slope_ratio_error;
  long n_steps = 0;
  double wall_time_ms = 0.0;
  bool not_primitive = false;
};

inline constexpr std::string_view kSweepHeader =
    "param_name,param_value,seed,lambda1,lambda2,gap_qr,gap_birkhoff,slope_tv,slope_ratio_error,n_steps,wall_time_ms";

struct SweepOptions {
  /// 0 picks the hardware concurrency.
  unsigned threads = 0;
  /// When false wall_time_ms is written as 0 so the CSV is byte-reproducible.
  bool record_timing = true;
};

/// One row per (value, seed) in grid-then-seed order. Each row reruns the
/// experiment with the parameter and seed replaced; the topology follows the
/// seed. Failures are recorded in the row.
std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepParameter param, const std::vector<double>& grid,
                            const std::vector<std::uint64_t>& seeds, const SweepOptions& options = {});

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

struct CheckReport {
  ConditionReport conditions;
  std::optional<long> weak_primitivity_time;
  long horizon = 0;
  NodeClassification nodes;
  bool strongly_connected = false;
  bool degenerate = false;
  bool hypotheses_hold = false;
};

CheckReport run_check(const ExperimentConfig& config);
std::string check_report_text(const CheckReport& report);
std::string check_report_json(const CheckReport& report);

}  // namespace pushsum
