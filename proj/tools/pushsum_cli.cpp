// Command-line front end: simulate, lyapunov, rates, sweep, check.

#include "pushsum/experiments.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDegenerate = 3;

struct Common {
  std::string config_path;
  std::string preset;
  std::string output;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON configuration file");
  cmd->add_option("--preset", c.preset, "Built-in configuration: reference_async or small_sync");
  cmd->add_option("-o,--output", c.output, "Write here instead of the config's output_path or stdout");
  cmd->add_option("--steps", c.steps, "Override the number of steps");
  cmd->add_option("--seed", c.seed, "Override the seed");
}

pushsum::ExperimentConfig resolve_config(const Common& c) {
  using pushsum::ConfigError;
  if (!c.config_path.empty() && !c.preset.empty()) throw ConfigError("give either --config or --preset, not both");
  pushsum::ExperimentConfig cfg;
  if (!c.config_path.empty()) {
    cfg = pushsum::load_experiment_config(c.config_path);
  } else if (c.preset == "reference_async") {
    cfg = pushsum::reference_async_preset();
  } else if (c.preset == "small_sync") {
    cfg = pushsum::small_sync_preset();
  } else if (!c.preset.empty()) {
    throw ConfigError("unknown preset '" + c.preset + "'");
  } else {
    throw ConfigError("need --config or --preset");
  }
  if (c.steps) {
    if (*c.steps < 1) throw ConfigError("--steps must be positive");
    cfg.n_steps = *c.steps;
  }
  if (c.seed) {
    cfg.process.seed = *c.seed;
    cfg.rebuild_topology();
  }
  if (!c.output.empty()) cfg.output_path = c.output;
  return cfg;
}

void emit(const pushsum::ExperimentConfig& cfg, const std::string& text) {
  if (cfg.output_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(cfg.output_path, std::ios::binary);
  if (!out) throw pushsum::ConfigError("cannot write '" + cfg.output_path + "'");
  out << text;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw pushsum::ConfigError(std::string("bad ") + what + " entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Push-sum consensus over lossy networks: simulation and convergence-rate estimation"};
  app.require_subcommand(1);

  Common simulate_opts;
  long every = 1;
  auto* simulate = app.add_subcommand("simulate", "One consensus run, trajectory as CSV");
  add_common(simulate, simulate_opts);
  simulate->add_option("--every", every, "Write every k-th step");

  Common lyapunov_opts;
  auto* lyapunov = app.add_subcommand("lyapunov", "Top two Lyapunov exponents as JSON");
  add_common(lyapunov, lyapunov_opts);

  Common rates_opts;
  auto* rates = app.add_subcommand("rates", "Full rate report as JSON");
  add_common(rates, rates_opts);

  Common sweep_opts;
  std::string param = "drop_rate";
  std::string grid_text;
  std::string seeds_text = "1";
  unsigned threads = 0;
  bool no_timing = false;
  auto* sweep = app.add_subcommand("sweep", "Rate estimates over a parameter grid as CSV");
  add_common(sweep, sweep_opts);
  sweep->add_option("--param", param, "drop_rate or s");
  sweep->add_option("--grid", grid_text, "Comma-separated parameter values");
  sweep->add_option("--seeds", seeds_text, "Comma-separated seeds");
  sweep->add_option("--threads", threads, "Worker threads, 0 for all cores");
  sweep->add_flag("--no-timing", no_timing, "Write wall_time_ms as 0 for reproducible output");

  Common check_opts;
  bool as_json = false;
  auto* check = app.add_subcommand("check", "Whether the convergence hypotheses hold for a configuration");
  add_common(check, check_opts);
  check->add_flag("--json", as_json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) {
      const auto cfg = resolve_config(simulate_opts);
      std::ostringstream os;
      pushsum::write_trajectory_csv(os, cfg, {every});
      emit(cfg, os.str());
    } else if (*lyapunov) {
      const auto cfg = resolve_config(lyapunov_opts);
      emit(cfg, pushsum::lyapunov_report_json(pushsum::run_lyapunov(cfg)));
    } else if (*rates) {
      const auto cfg = resolve_config(rates_opts);
      emit(cfg, pushsum::rate_report_json(pushsum::run_rate_experiment(cfg)));
    } else if (*sweep) {
      const auto cfg = resolve_config(sweep_opts);
      const auto which = pushsum::parse_sweep_parameter(param);
      const auto grid = parse_list<double>(grid_text, "grid");
      const auto seeds = parse_list<std::uint64_t>(seeds_text, "seed");
      if (seeds.empty()) throw pushsum::ConfigError("need at least one seed");
      const auto rows = pushsum::sweep(cfg, which, grid, seeds, {threads, !no_timing});
      emit(cfg, pushsum::sweep_csv(rows));
    } else if (*check) {
      const auto cfg = resolve_config(check_opts);
      const auto report = pushsum::run_check(cfg);
      emit(cfg, as_json ? pushsum::check_report_json(report) : pushsum::check_report_text(report));
    }
  } catch (const pushsum::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pushsum::DegenerateProcessError& e) {
    std::cerr << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
