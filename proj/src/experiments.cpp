#include "pushsum/experiments.hpp"

#include "pushsum/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace pushsum {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Slopes

double fit_slope_from(const LogSeries& series, double min_step) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [step, value] : series) {
    if (step < min_step || !std::isfinite(value)) continue;
    xs.push_back(step);
    ys.push_back(value);
  }
  if (xs.size() < kMinSlopePoints) {
    throw EstimatorError("fit_slope: " + std::to_string(xs.size()) + " usable points, need " +
                         std::to_string(kMinSlopePoints));
  }
  return ols_slope(xs, ys);
}

double fit_slope(const LogSeries& series, double burn_in_fraction) {
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) throw DomainError("fit_slope: burn-in fraction in [0, 1)");
  const auto skip = static_cast<std::size_t>(burn_in_fraction * static_cast<double>(series.size()));
  const LogSeries kept(series.begin() + static_cast<std::ptrdiff_t>(skip), series.end());
  return fit_slope_from(kept, -std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Configuration

Vector InitialVector::resolve(Index p, Rng& rng) const {
  switch (kind) {
    case Kind::Explicit:
      return values;
    case Kind::Average:
      return Vector::Ones(p);
    case Kind::Sum: {
      Vector v = Vector::Zero(p);
      v(0) = 1.0;
      return v;
    }
    case Kind::RandomPositive: {
      Vector v(p);
      for (Index i = 0; i < p; ++i) v(i) = rng.uniform(0.5, 1.5);
      return v;
    }
  }
  throw ConfigError("unknown initial vector kind");
}

std::string InitialVector::describe() const {
  switch (kind) {
    case Kind::Explicit:
      return "explicit";
    case Kind::Average:
      return "average";
    case Kind::Sum:
      return "sum";
    case Kind::RandomPositive:
      return "random_positive";
  }
  return "unknown";
}

bool ExperimentConfig::uses(Estimator e) const {
  return std::find(estimators.begin(), estimators.end(), e) != estimators.end();
}

void ExperimentConfig::rebuild_topology() {
  if (topology.type == "random_regular_out") {
    process.topology = random_regular_out_digraph(topology.p, topology.d, process.seed);
  } else if (topology.type == "complete") {
    process.topology = complete_digraph(topology.p);
  } else if (topology.type == "edge_list") {
    if (topology.path.empty()) throw ConfigError("edge_list topology needs a path");
    process.topology = read_edge_list(topology.path);
  } else {
    throw ConfigError("unknown topology type '" + topology.type + "'");
  }
}

namespace {

template <typename T>
T get_number(const json& j, const char* key) {
  if (!j.is_number()) throw ConfigError(std::string(key) + " must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw ConfigError(std::string(key) + " must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (j.get<long long>() < 0) throw ConfigError(std::string(key) + " must be nonnegative");
    }
  }
  return j.get<T>();
}

InitialVector parse_initial(const json& j, const char* key, bool allow_weight_presets) {
  InitialVector v;
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "random_positive") {
      v.kind = InitialVector::Kind::RandomPositive;
    } else if (allow_weight_presets && name == "average") {
      v.kind = InitialVector::Kind::Average;
    } else if (allow_weight_presets && name == "sum") {
      v.kind = InitialVector::Kind::Sum;
    } else {
      throw ConfigError(std::string(key) + ": unknown preset '" + name + "'");
    }
    return v;
  }
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(key) + " must be a preset name or a nonempty array");
  v.kind = InitialVector::Kind::Explicit;
  v.values.resize(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v.values(static_cast<Index>(k)) = get_number<double>(j[k], key);
  return v;
}

Estimator parse_estimator(const std::string& name) {
  if (name == "qr") return Estimator::Qr;
  if (name == "birkhoff") return Estimator::Birkhoff;
  if (name == "empirical") return Estimator::Empirical;
  if (name == "compound") return Estimator::Compound;
  throw ConfigError("unknown estimator '" + name + "'");
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  static const std::vector<std::string> known{"topology", "mode",       "drop_rate", "s",      "steps",
                                              "seed",     "x0",         "w0",        "target", "estimators",
                                              "birkhoff_samples", "output_path"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  }

  ExperimentConfig cfg;
  try {
    if (doc.contains("topology")) {
      const json& t = doc["topology"];
      if (!t.is_object()) throw ConfigError("topology must be an object");
      if (t.contains("type")) cfg.topology.type = t["type"].get<std::string>();
      if (t.contains("p")) cfg.topology.p = get_number<Index>(t["p"], "topology.p");
      if (t.contains("d")) cfg.topology.d = get_number<Index>(t["d"], "topology.d");
      if (t.contains("path")) {
        std::filesystem::path path = t["path"].get<std::string>();
        if (path.is_relative() && !base_dir.empty()) path = std::filesystem::path(base_dir) / path;
        cfg.topology.path = path.string();
      }
    }
    if (doc.contains("mode")) {
      const auto mode = doc["mode"].get<std::string>();
      if (mode == "sync") {
        cfg.process.mode = Mode::Sync;
      } else if (mode == "async") {
        cfg.process.mode = Mode::Async;
      } else {
        throw ConfigError("mode must be \"sync\" or \"async\"");
      }
    }
    if (doc.contains("drop_rate")) cfg.process.drop_rate = get_number<double>(doc["drop_rate"], "drop_rate");
    if (doc.contains("s")) {
      const json& s = doc["s"];
      if (s.is_string()) {
        if (s.get<std::string>() != "classic") throw ConfigError("s must be a number or \"classic\"");
        cfg.process.s = PacketFraction::classic();
      } else {
        cfg.process.s = PacketFraction::fixed(get_number<double>(s, "s"));
      }
    }
    if (doc.contains("steps")) cfg.n_steps = get_number<long>(doc["steps"], "steps");
    if (doc.contains("seed")) cfg.process.seed = get_number<std::uint64_t>(doc["seed"], "seed");
    if (doc.contains("x0")) cfg.x0 = parse_initial(doc["x0"], "x0", false);
    if (doc.contains("w0")) cfg.w0 = parse_initial(doc["w0"], "w0", true);
    if (doc.contains("target")) {
      const auto target = doc["target"].get<std::string>();
      if (target == "general") {
        cfg.general_target = true;
      } else if (target != "mass") {
        throw ConfigError("target must be \"mass\" or \"general\"");
      }
    }
    if (doc.contains("estimators")) {
      if (!doc["estimators"].is_array()) throw ConfigError("estimators must be an array");
      cfg.estimators.clear();
      for (const auto& e : doc["estimators"]) cfg.estimators.push_back(parse_estimator(e.get<std::string>()));
    }
    if (doc.contains("birkhoff_samples")) {
      cfg.birkhoff_samples = get_number<long>(doc["birkhoff_samples"], "birkhoff_samples");
    }
    if (doc.contains("output_path")) cfg.output_path = doc["output_path"].get<std::string>();
  } catch (const json::type_error& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }

  if (cfg.n_steps < 1) throw ConfigError("steps must be positive");
  if (cfg.birkhoff_samples < 1) throw ConfigError("birkhoff_samples must be positive");
  cfg.process.validate();
  cfg.rebuild_topology();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), std::filesystem::path(path).parent_path().string());
}

ExperimentConfig reference_async_preset(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.topology = {"random_regular_out", 30, 10, ""};
  cfg.process.mode = Mode::Async;
  cfg.process.drop_rate = 0.0;
  cfg.process.s = PacketFraction::classic();
  cfg.process.seed = seed;
  cfg.n_steps = 5000;
  cfg.birkhoff_samples = 100;
  cfg.rebuild_topology();
  return cfg;
}

ExperimentConfig small_sync_preset(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.topology = {"random_regular_out", 5, 2, ""};
  cfg.process.mode = Mode::Sync;
  cfg.process.drop_rate = 0.2;
  cfg.process.s = PacketFraction::classic();
  cfg.process.seed = seed;
  cfg.n_steps = 20000;
  cfg.rebuild_topology();
  return cfg;
}

// ---------------------------------------------------------------------------
// Rate experiment

namespace {

// A vector in the kernel of 1' carried through the process as
// values * e^log_scale. The mean is removed after every step: the kernel is
// invariant under column-stochastic steps, so this only strips rounding
// error that would otherwise grow along the non-decaying direction.
class ProjectedTracker {
 public:
  explicit ProjectedTracker(Vector v) : v_(std::move(v)) { normalise(); }

  void step(const SparseRowMatrix& a) {
    if (zero_) return;
    v_ = a * v_;
    v_.array() -= v_.mean();
    normalise();
  }

  bool zero() const { return zero_; }
  const Vector& values() const { return v_; }
  double log_scale() const { return log_scale_; }

 private:
  void normalise() {
    const double peak = v_.cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) {
      zero_ = true;
      return;
    }
    v_ /= peak;
    log_scale_ += std::log(peak);
  }

  Vector v_;
  double log_scale_ = 0.0;
  bool zero_ = false;
};

double log_or_minus_inf(double v) { return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity(); }

// Ratio errors below this fraction of the target sit in rounding noise.
constexpr double kGeneralTargetFloor = 1e-13;

void add_agreement(RateReport& r, const char* name, const std::optional<double>& a, const std::optional<double>& b) {
  if (a && b) r.agreement[name] = relative_difference(std::abs(*a), std::abs(*b));
}

}  // namespace

RateReport run_rate_experiment(const ExperimentConfig& config) {
  const ProcessConfig& proc = config.process;
  proc.validate();
  if (proc.drop_rate >= 1.0) {
    throw DegenerateProcessError("degenerate process: drop_rate = 1 delivers nothing, so no consensus or rate exists");
  }
  if (config.n_steps < 1000) throw ConfigError("rate estimates need steps >= 1000");
  const long n = config.n_steps;
  const NetworkTopology& topo = proc.topology;
  const Index p = topo.node_count();
  const Index dim = proc.dim();

  Rng init_rng(proc.seed, kInitialValueStream);
  const Vector x0_real = config.x0.resolve(p, init_rng);
  const Vector w0_real = config.w0.resolve(p, init_rng);
  ProtocolState state = make_state(topo, x0_real, w0_real);
  const ProtocolState initial = state;

  RateReport report;
  report.seed = proc.seed;
  report.n_steps = n;
  report.dim = dim;
  report.target = state.x.sum() / state.w.sum();

  std::optional<QrEstimator> qr;
  if (config.uses(Estimator::Qr)) qr.emplace(dim, n, proc.seed);
  std::optional<BirkhoffGapTracker> birkhoff;
  if (config.uses(Estimator::Birkhoff)) birkhoff.emplace(dim, n, config.birkhoff_samples);
  std::optional<CompoundTracker> compound;
  if (config.uses(Estimator::Compound)) {
    try {
      compound.emplace(dim, proc.seed);
    } catch (const DomainError& e) {
      report.failures.push_back(std::string("compound: ") + e.what());
    }
  }
  const bool empirical = config.uses(Estimator::Empirical);
  std::optional<ScaledProduct> own_product;
  if (empirical && config.general_target && !birkhoff) own_product = ScaledProduct::identity(dim);

  const bool x_nonneg = (state.x.array() >= 0.0).all() && state.x.sum() > 0.0;
  std::optional<ProjectedTracker> tv_tracker;
  if (empirical && x_nonneg) tv_tracker.emplace(state.x / state.x.sum() - state.w / state.w.sum());
  std::optional<ProjectedTracker> err_tracker;
  if (empirical && !config.general_target) err_tracker.emplace(state.x - report.target * state.w);

  const long sample_every = std::max(1L, n / 4000);
  LogSeries tv_series;
  LogSeries err_series;
  std::vector<std::pair<long, Vector>> ratio_samples;

  SupportPattern support = SupportPattern::Constant(dim, dim, false);
  support.matrix().diagonal().setConstant(true);

  GossipStream stream(proc);
  for (long k = 1; k <= n; ++k) {
    const NonNegMatrix a = stream.next();
    if (qr) qr->step(a);
    if (birkhoff) birkhoff->step(a);
    if (compound) {
      try {
        compound->step(a);
      } catch (const EstimatorError& e) {
        report.failures.push_back(std::string("compound: ") + e.what());
        compound.reset();
      }
    }
    if (own_product) own_product->left_multiply(a);
    if (!report.weak_primitivity_time) {
      support = support_left_multiply(a, support);
      if (rows_positive_or_zero(support)) report.weak_primitivity_time = k;
    }
    if (!empirical) continue;

    const SparseRowMatrix& s = a.sparse();
    state.x = s * state.x;
    state.w = s * state.w;
    if (tv_tracker) tv_tracker->step(s);
    if (err_tracker) err_tracker->step(s);
    if (k % sample_every != 0) continue;

    const double kd = static_cast<double>(k);
    if (tv_tracker) {
      const double l1 = tv_tracker->zero() ? 0.0 : tv_tracker->values().cwiseAbs().sum();
      tv_series.emplace_back(kd, log_or_minus_inf(0.5 * l1) + tv_tracker->log_scale());
    }
    if (err_tracker) {
      double worst = 0.0;
      bool any = false;
      for (Index i = 0; i < p; ++i) {
        if (!(state.w(i) > 0.0)) continue;
        any = true;
        if (!err_tracker->zero()) worst = std::max(worst, std::abs(err_tracker->values()(i)) / state.w(i));
      }
      if (any) err_series.emplace_back(kd, log_or_minus_inf(worst) + err_tracker->log_scale());
    }
    if (config.general_target) {
      Vector r = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
      for (Index i = 0; i < p; ++i) {
        if (state.w(i) > 0.0) r(i) = state.x(i) / state.w(i);
      }
      ratio_samples.emplace_back(k, std::move(r));
    }
  }

  if (!report.weak_primitivity_time) report.not_primitive = true;
  const double burn_in =
      std::max(static_cast<double>(report.weak_primitivity_time.value_or(0)), 0.1 * static_cast<double>(n));
  report.burn_in = static_cast<long>(std::ceil(burn_in));

  if (qr) {
    const LyapunovEstimate est = qr->readout();
    report.lambda1 = est.lambda1;
    report.lambda2 = est.lambda2;
    report.gap_qr = est.gap;
    report.windows = est.windows;
    report.rank_deficient_steps = est.rank_deficient_steps;
    if (!est.gap) report.failures.push_back("qr: second exponent is -infinity (rank deficient)");
  }
  if (birkhoff) {
    report.birkhoff_method = birkhoff->method() == BirkhoffMethod::Direct ? "direct" : "exact_minors";
    try {
      const BirkhoffEstimate est = birkhoff->finish();
      report.gap_birkhoff = est.gap;
      report.birkhoff_points = est.fitted_points;
    } catch (const NotPrimitiveError& e) {
      report.not_primitive = true;
      report.failures.push_back(std::string("birkhoff: not primitive: ") + e.what());
    } catch (const EstimatorError& e) {
      report.failures.push_back(std::string("birkhoff: ") + e.what());
    }
  }
  if (compound) {
    try {
      report.sum_top2_compound = compound->readout().sum_top2;
    } catch (const EstimatorError& e) {
      report.failures.push_back(std::string("compound: ") + e.what());
    }
  }

  if (empirical) {
    if (config.general_target) {
      const ScaledProduct& m = birkhoff ? birkhoff->product() : *own_product;
      const FirstOrderApprox approx = first_order_approx(m);
      report.target = approx.v1.dot(initial.x) / approx.v1.dot(initial.w);
      const double floor = kGeneralTargetFloor * std::max(1.0, std::abs(report.target));
      for (const auto& [k, r] : ratio_samples) {
        double worst = -1.0;
        for (Index i = 0; i < p; ++i) {
          if (std::isfinite(r(i))) worst = std::max(worst, std::abs(r(i) - report.target));
        }
        if (worst > floor) err_series.emplace_back(static_cast<double>(k), std::log(worst));
      }
    }
    if (!tv_tracker) report.failures.push_back("slope_tv: needs a nonnegative x0");
    try {
      if (tv_tracker) report.slope_tv = fit_slope_from(tv_series, burn_in);
    } catch (const EstimatorError& e) {
      report.failures.push_back(std::string("slope_tv: ") + e.what());
    }
    try {
      report.slope_ratio_error = fit_slope_from(err_series, burn_in);
    } catch (const EstimatorError& e) {
      report.failures.push_back(std::string("slope_ratio_error: ") + e.what());
    }
    for (Index i = 0; i < p; ++i) {
      if (state.w(i) > 0.0) {
        report.final_max_ratio_error =
            std::max(report.final_max_ratio_error, std::abs(state.x(i) / state.w(i) - report.target));
      }
    }
  }

  add_agreement(report, "qr_vs_birkhoff", report.gap_qr, report.gap_birkhoff);
  add_agreement(report, "qr_vs_tv", report.gap_qr, report.slope_tv);
  add_agreement(report, "birkhoff_vs_tv", report.gap_birkhoff, report.slope_tv);
  add_agreement(report, "qr_vs_ratio_error", report.gap_qr, report.slope_ratio_error);
  if (report.lambda1 && report.lambda2 && report.sum_top2_compound) {
    report.agreement["qr_sum_vs_compound"] = std::abs(*report.lambda1 + *report.lambda2 - *report.sum_top2_compound);
  }
  return report;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string rate_report_json(const RateReport& r) {
  json j;
  j["seed"] = r.seed;
  j["n_steps"] = r.n_steps;
  j["dim"] = r.dim;
  j["target"] = r.target;
  j["lambda1"] = optional_json(r.lambda1);
  j["lambda2"] = optional_json(r.lambda2);
  j["gap_qr"] = optional_json(r.gap_qr);
  j["gap_birkhoff"] = r.gap_birkhoff ? json(*r.gap_birkhoff) : (r.not_primitive ? json("not primitive") : json(nullptr));
  j["sum_top2_compound"] = optional_json(r.sum_top2_compound);
  j["slope_tv"] = optional_json(r.slope_tv);
  j["slope_ratio_error"] = optional_json(r.slope_ratio_error);
  j["agreement"] = r.agreement;
  json diag;
  diag["burn_in"] = r.burn_in;
  diag["weak_primitivity_time"] = r.weak_primitivity_time ? json(*r.weak_primitivity_time) : json(nullptr);
  diag["rank_deficient_steps"] = r.rank_deficient_steps;
  diag["birkhoff_method"] = r.birkhoff_method;
  diag["birkhoff_points"] = r.birkhoff_points;
  diag["final_max_ratio_error"] = r.final_max_ratio_error;
  json windows = json::array();
  for (const auto& w : r.windows) windows.push_back({{"end_step", w.end_step}, {"lambda1", w.lambda1}, {"lambda2", w.lambda2}});
  diag["windows"] = windows;
  diag["failures"] = r.failures;
  j["diagnostics"] = diag;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Plain trajectory and estimates only

namespace {

std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

}  // namespace

void write_trajectory_csv(std::ostream& out, const ExperimentConfig& config, const TrajectoryOptions& options) {
  if (options.every < 1) throw ConfigError("trajectory sampling interval must be positive");
  const ProcessConfig& proc = config.process;
  proc.validate();
  Rng init_rng(proc.seed, kInitialValueStream);
  const Vector x0 = config.x0.resolve(proc.topology.node_count(), init_rng);
  const Vector w0 = config.w0.resolve(proc.topology.node_count(), init_rng);
  const Trajectory traj =
      run_consensus(proc.topology, x0, w0, config.n_steps, proc.seed, proc.drop_rate, proc.s, proc.mode);
  out << "step,max_ratio_error,tv,mass_x,mass_w\n";
  for (const auto& pt : traj.points) {
    if (pt.step % options.every != 0) continue;
    out << pt.step << ',' << format_optional(pt.max_ratio_error) << ',' << format_optional(pt.tv) << ','
        << format_double(pt.mass_x) << ',' << format_double(pt.mass_w) << '\n';
  }
}

LyapunovReport run_lyapunov(const ExperimentConfig& config) {
  config.process.validate();
  LyapunovReport report;
  GossipStream stream(config.process);
  QrEstimator qr(config.process.dim(), config.n_steps, config.process.seed);
  std::optional<CompoundTracker> compound;
  if (config.uses(Estimator::Compound)) compound.emplace(config.process.dim(), config.process.seed);
  if (config.n_steps < 100) throw ConfigError("Lyapunov estimates need steps >= 100");
  for (long k = 0; k < config.n_steps; ++k) {
    const NonNegMatrix a = stream.next();
    qr.step(a);
    if (compound) compound->step(a);
  }
  report.qr = qr.readout();
  if (compound) report.compound = compound->readout();
  return report;
}

std::string lyapunov_report_json(const LyapunovReport& r) {
  json j;
  j["lambda1"] = r.qr.lambda1;
  j["lambda2"] = optional_json(r.qr.lambda2);
  j["gap"] = optional_json(r.qr.gap);
  j["steps"] = r.qr.steps;
  j["burn_in"] = r.qr.burn_in;
  j["rank_deficient_steps"] = r.qr.rank_deficient_steps;
  j["windows_stable_1e-3"] = r.qr.windows_stable(1e-3);
  json windows = json::array();
  for (const auto& w : r.qr.windows) windows.push_back({{"end_step", w.end_step}, {"lambda1", w.lambda1}, {"lambda2", w.lambda2}});
  j["windows"] = windows;
  if (r.compound) j["sum_top2_compound"] = r.compound->sum_top2;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Sweeps

std::string_view to_string(SweepParameter param) {
  return param == SweepParameter::DropRate ? "drop_rate" : "s";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "drop_rate") return SweepParameter::DropRate;
  if (name == "s") return SweepParameter::PacketFraction;
  throw ConfigError("sweep parameter must be drop_rate or s");
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

SweepRow run_sweep_row(const ExperimentConfig& base, SweepParameter param, double value, std::uint64_t seed,
                       bool record_timing) {
  const auto start = std::chrono::steady_clock::now();
  SweepRow row;
  row.param_name = std::string(to_string(param));
  row.param_value = value;
  row.seed = seed;
  row.n_steps = base.n_steps;

  ExperimentConfig cfg = base;
  cfg.process.seed = seed;
  if (param == SweepParameter::DropRate) {
    cfg.process.drop_rate = value;
  } else {
    cfg.process.s = PacketFraction::fixed(value);
  }
  cfg.rebuild_topology();
  try {
    const RateReport r = run_rate_experiment(cfg);
    row.lambda1 = r.lambda1;
    row.lambda2 = r.lambda2;
    row.gap_qr = r.gap_qr;
    row.gap_birkhoff = r.gap_birkhoff;
    row.slope_tv = r.slope_tv;
    row.slope_ratio_error = r.slope_ratio_error;
    row.not_primitive = r.not_primitive;
  } catch (const NotPrimitiveError&) {
    row.not_primitive = true;
  } catch (const EstimatorError&) {
  } catch (const DomainError&) {
  }
  if (record_timing) {
    row.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return row;
}

}  // namespace

std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepParameter param, const std::vector<double>& grid,
                            const std::vector<std::uint64_t>& seeds, const SweepOptions& options) {
  for (const double v : grid) {
    if (param == SweepParameter::DropRate && !(v >= 0.0 && v < 1.0)) {
      throw ConfigError("sweep: drop_rate values must lie in [0, 1)");
    }
    if (param == SweepParameter::PacketFraction && !(v > 0.0 && v <= 1.0)) {
      throw ConfigError("sweep: s values must lie in (0, 1]");
    }
  }
  const std::size_t total = grid.size() * seeds.size();
  std::vector<SweepRow> rows(total);
  if (total == 0) return rows;

  unsigned threads = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, total));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      try {
        rows[k] = run_sweep_row(base, param, grid[k / seeds.size()], seeds[k % seeds.size()], options.record_timing);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepHeader << '\n';
  for (const auto& r : rows) {
    const auto gap_field = [&](const std::optional<double>& v) {
      if (v) return format_double(*v);
      return std::string(r.not_primitive ? "not primitive" : "NA");
    };
    out << r.param_name << ',' << format_double(r.param_value) << ',' << r.seed << ',' << format_optional(r.lambda1)
        << ',' << format_optional(r.lambda2) << ',' << gap_field(r.gap_qr) << ',' << gap_field(r.gap_birkhoff) << ','
        << format_optional(r.slope_tv) << ',' << format_optional(r.slope_ratio_error) << ',' << r.n_steps << ','
        << format_double(r.wall_time_ms) << '\n';
  }
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  write_sweep_csv(os, rows);
  return os.str();
}

// ---------------------------------------------------------------------------
// Hypothesis check

CheckReport run_check(const ExperimentConfig& config) {
  constexpr long kHorizon = 1000;
  constexpr long kConditionSamples = 1000;
  const ProcessConfig& proc = config.process;
  proc.validate();
  CheckReport report;
  report.degenerate = proc.drop_rate >= 1.0;
  report.horizon = kHorizon;
  report.conditions = verify_conditions(proc, kConditionSamples, proc.seed);
  GossipStream stream(proc);
  report.weak_primitivity_time = weak_primitivity_time(stream, kHorizon);
  report.nodes = classify_nodes(proc, 20, 200);
  report.strongly_connected = strongly_connected(proc.topology);
  report.hypotheses_hold =
      !report.degenerate && report.conditions.bounded_condition && report.weak_primitivity_time.has_value();
  return report;
}

namespace {

std::string id_set(const std::vector<Index>& ids) {
  std::string s = "{";
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k) s += ", ";
    s += std::to_string(ids[k]);
  }
  return s + "}";
}

}  // namespace

std::string check_report_text(const CheckReport& r) {
  std::ostringstream os;
  const auto& c = r.conditions;
  if (c.bounded_condition) {
    os << "bounded condition: proven (finite range)\n";
  } else {
    os << "bounded condition: not established\n";
  }
  os << "  positive entries in [" << format_double(c.alpha_min) << ", " << format_double(c.beta_max) << "]"
     << (c.exact ? " over the exact range of " : " over ") << c.samples << (c.exact ? " matrices\n" : " sampled steps\n");
  if (c.psi_expectation_estimate) {
    os << "  E psi estimate: " << format_double(*c.psi_expectation_estimate) << " over " << c.psi_trials << " trials\n";
  } else {
    os << "  E psi estimate: unavailable, psi not reached in " << c.psi_not_reached << " of " << c.psi_trials
       << " trials\n";
  }
  if (r.weak_primitivity_time) {
    os << "weak primitivity: reached at step " << *r.weak_primitivity_time << "\n";
  } else {
    os << "weak primitivity: not reached within " << r.horizon << " steps\n";
  }
  os << "strongly connected: " << (r.strongly_connected ? "yes" : "no") << "\n";
  os << "real nodes: " << id_set(r.nodes.real_nodes) << "\n";
  os << "virtual nodes: " << id_set(r.nodes.virtual_nodes) << "\n";
  for (const auto& w : r.nodes.warnings) os << "warning: " << w << "\n";
  if (r.degenerate) os << "warning: drop_rate = 1 is a degenerate process\n";
  os << "verdict: hypotheses " << (r.hypotheses_hold ? "satisfied" : "not satisfied") << "\n";
  return os.str();
}

std::string check_report_json(const CheckReport& r) {
  const auto& c = r.conditions;
  json j;
  j["bounded_condition"] = c.bounded_condition;
  j["finite_range"] = c.finite_range;
  j["alpha_min"] = c.alpha_min;
  j["beta_max"] = c.beta_max;
  j["exact_range"] = c.exact;
  j["samples"] = c.samples;
  j["psi_expectation_estimate"] = optional_json(c.psi_expectation_estimate);
  j["psi_trials"] = c.psi_trials;
  j["psi_not_reached"] = c.psi_not_reached;
  j["weak_primitivity_time"] = r.weak_primitivity_time ? json(*r.weak_primitivity_time) : json("not reached");
  j["horizon"] = r.horizon;
  j["strongly_connected"] = r.strongly_connected;
  j["real_nodes"] = r.nodes.real_nodes;
  j["virtual_nodes"] = r.nodes.virtual_nodes;
  j["zero_row_frequency"] = r.nodes.zero_row_frequency;
  j["warnings"] = r.nodes.warnings;
  j["degenerate"] = r.degenerate;
  j["hypotheses_hold"] = r.hypotheses_hold;
  return j.dump(2) + "\n";
}

}  // namespace pushsum
