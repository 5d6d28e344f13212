// Command-line front end: run sweeps, report comparisons, run acceptance checks.

#include "crl/checks.hpp"
#include "crl/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <sstream>

namespace {

void print_arms(const std::vector<crl::ArmSummary>& arms) {
  fmt::print("{:<28} {:>6} {:>12} {:>12} {:>8}\n", "arm", "runs", "mean", "stderr", "failed");
  for (const auto& a : arms) {
    fmt::print("{:<28} {:>6} {:>12.6f} {:>12.6f} {:>8}\n", a.name, a.seeds.size(), a.final_rate.mean,
               a.final_rate.std_error, a.failures);
  }
}

void print_reports(const std::vector<crl::ComparisonReport>& reports) {
  for (const auto& r : reports) {
    const std::string improvement =
        r.improvement.applicable ? fmt::format("{:+.1f}%", 100.0 * r.improvement.value) : std::string("N/A");
    fmt::print("{} vs {} (baseline {}): improvement {}, p = {:.4g}{}\n", r.arms.candidate, r.arms.reference,
               r.arms.baseline, improvement, r.welch.p, r.significant ? " (significant)" : "");
  }
}

std::vector<std::string> split_names(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream in(item);
    std::string name;
    while (std::getline(in, name, ',')) {
      if (!name.empty()) out.push_back(name);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-centering experiments for continuing reinforcement learning"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 1;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run every (arm, seed) of a config and write its outputs");
  run->add_option("--config", config_path, "Experiment YAML")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "Parallel runs")->envname("CRL_WORKERS")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory (default: the config's output_dir)")->envname("CRL_OUT_DIR");

  std::string sweep_dir;
  std::string compare;
  bool json_output = false;
  auto* report = app.add_subcommand("report", "Aggregate a finished sweep");
  report->add_option("--sweep", sweep_dir, "Directory written by run")->required()->check(CLI::ExistingDirectory);
  report->add_option("--compare", compare,
                     "candidate:reference:baseline[,...]; use a|b|c to pick the best of several arms")
      ->required();
  report->add_flag("--json", json_output, "Print the summary JSON instead of a table");

  std::vector<std::string> checks;
  std::string golden_dir = CRL_GOLDEN_DIR;
  auto* oracle = app.add_subcommand("oracle", "Run acceptance checks");
  oracle->add_option("--check", checks, "Check name(s), or all")->required();
  oracle->add_option("--golden", golden_dir, "Golden directory for the golden check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const crl::ExperimentConfig config = crl::parse_config(config_path);
      const std::string target = out_dir.empty() ? config.output_dir : out_dir;
      const crl::SweepResult sweep = crl::run_experiment(config, workers);
      crl::emit_outputs(config, sweep, target);
      std::map<std::string, long> windows;
      for (const auto& arm : config.arms) windows[arm.name] = arm.settings.window;
      const auto arms = crl::summarize_arms(sweep, windows);
      print_arms(arms);
      print_reports(crl::aggregate(arms, config.comparisons));
      fmt::print("outputs written to {}\n", target);
      return 0;
    }
    if (*report) {
      const crl::LoadedSweep loaded = crl::load_sweep(sweep_dir);
      std::map<std::string, long> windows;
      for (const auto& arm : loaded.config.arms) windows[arm.name] = arm.settings.window;
      const auto arms = crl::summarize_arms(loaded.sweep, windows);
      std::vector<crl::ComparisonSpec> specs;
      for (const auto& spec : crl::parse_comparisons(compare)) {
        specs.push_back(crl::resolve_best(arms, spec));
      }
      const auto reports = crl::aggregate(arms, specs);
      if (json_output) {
        fmt::print("{}", crl::summary_json(loaded.config, arms, reports, loaded.sweep.config_hash));
      } else {
        print_arms(arms);
        print_reports(reports);
      }
      return 0;
    }
    if (*oracle) {
      const auto results = crl::run_checks(split_names(checks), golden_dir);
      bool all = true;
      for (const auto& r : results) {
        fmt::print("{}\n", crl::format_check(r));
        all = all && r.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
