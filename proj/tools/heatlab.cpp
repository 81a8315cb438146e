#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "heatlab/harness/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 2;
constexpr int kExitUsage = 64;
constexpr int kExitRuntime = 70;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw heatlab::UsageError("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace heatlab::harness;
  CLI::App app{"Monte Carlo experiments for the stochastic heat equation"};
  std::string experiment, config_path, out_dir;
  bool check = false, print_default = false;
  std::uint64_t seed = 0;
  std::size_t reps = 0;
  app.add_option("experiment", experiment, "holder | coupling | seminorm | smallball | hitting | density | gauge")
      ->required();
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_flag("--check", check, "exit 2 unless every acceptance check passes");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  auto* reps_opt = app.add_option("--reps", reps, "replications (overrides the config)")->check(CLI::PositiveNumber);
  app.add_flag("--print-default", print_default, "print the default config for the experiment and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  ExperimentConfig cfg;
  try {
    const auto parsed = parse_experiment(experiment);
    if (!parsed) throw heatlab::UsageError("unknown experiment '" + experiment + "'");
    const Experiment e = *parsed;
    if (print_default) {
      std::cout << serialize(default_config(e)) << "\n";
      return kExitOk;
    }
    if (config_path.empty()) throw heatlab::UsageError("--config is required");
    cfg = parse(read_file(config_path));
    if (cfg.experiment != e) {
      throw heatlab::UsageError("config is for '" + to_string(cfg.experiment) + "', not '" + experiment + "'");
    }
    if (*seed_opt) cfg.seed = seed;
    if (*reps_opt) cfg.budgets.replications = reps;
    if (!out_dir.empty()) cfg.output = out_dir;
    validate(cfg);
  } catch (const heatlab::Error& e) {
    std::cerr << "heatlab: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const auto r = run_experiment(cfg);
    write_record(r, to_json(cfg), cfg.output);
    for (const auto& c : r.checks) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    }
    std::cout << "wrote " << cfg.output << "/" << r.experiment << ".{csv,json} (" << format_number(r.wall_clock)
              << " s)\n";
    if (check && !r.passed()) return kExitCheckFailed;
    return kExitOk;
  } catch (const heatlab::UsageError& e) {
    std::cerr << "heatlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const heatlab::ConfigError& e) {
    std::cerr << "heatlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "heatlab: " << e.what() << "\n";
    return kExitRuntime;
  }
}
