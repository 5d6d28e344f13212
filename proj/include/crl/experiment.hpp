#pragma once

#include "crl/agent.hpp"
#include "crl/evaluation.hpp"
#include "crl/wrappers.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crl {

/// Config problems, with "line L, column C" context when the source is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EnvKind { catch_game, pendulum, tabular };

struct EnvSpec {
  EnvKind kind = EnvKind::catch_game;
  // tabular only
  std::uint64_t mdp_seed = 0;
  int num_states = 5;
  int num_actions = 2;
  double reward_span = 1.0;
  double reward_noise_std = 0.0;

  bool operator==(const EnvSpec&) const = default;
};

enum class WrapperKind { random_reset, reset_as_transition, agent_controlled_reset, reward_offset, angle_wrap };

struct WrapperSpec {
  WrapperKind kind = WrapperKind::reward_offset;
  double probability = 0.0;          // random_reset
  double reset_cost = 10.0;          // reset_as_transition, agent_controlled_reset
  std::vector<int> failure_states;   // reset_as_transition on tabular environments
  double offset = 0.0;               // reward_offset
  std::vector<int> angle_indices;    // angle_wrap
  bool centered = false;             // angle_wrap

  bool operator==(const WrapperSpec&) const = default;
};

/// Everything that defines one arm of a sweep.
struct ArmSettings {
  std::string preset = "desk";
  EnvSpec env;
  /// Innermost first: each wrapper wraps the result of the previous ones.
  std::vector<WrapperSpec> wrappers;
  AgentConfig agent;
  long steps = 10'000;
  long log_stride = 1;
  bool trace_states = false;
  long window = 10'000;

  bool operator==(const ArmSettings&) const = default;
};

struct Arm {
  std::string name;
  ArmSettings settings;

  bool operator==(const Arm&) const = default;
};

struct ComparisonSpec {
  std::string candidate;
  std::string reference;
  std::string baseline;

  bool operator==(const ComparisonSpec&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "out";
  std::vector<Arm> arms;
  std::vector<ComparisonSpec> comparisons;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Preset hyperparameters: "desk", "paper_mujoco" or "paper_atari", resolved
/// for one algorithm.
AgentConfig preset_agent_config(const std::string& preset, const std::string& algorithm);

ExperimentConfig parse_config_string(const std::string& text, const std::string& source = "<config>");
ExperimentConfig parse_config(const std::filesystem::path& path);
/// Canonical YAML with every field explicit; parse(emit(c)) == c.
std::string emit_config(const ExperimentConfig& config);
/// FNV-1a of the canonical YAML, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

std::string to_string(EnvKind kind);
std::string to_string(WrapperKind kind);

/// Base environment plus wrapper stack for one run. Dynamics use the "env"
/// stream, wrapper i uses "reset/<i>".
std::unique_ptr<Environment> make_environment(const ArmSettings& settings, std::uint64_t seed);
/// The agent config after applying what the wrapper stack implies (an
/// agent-controlled reset wrapper turns on the reset-biased warmup).
AgentConfig effective_agent_config(const ArmSettings& settings);

struct RunResult {
  std::string arm;
  std::uint64_t seed = 0;
  RunLog log;
  bool failed = false;
  long failure_step = 0;
  std::string failure_message;
};

struct SweepResult {
  std::string config_hash;
  std::vector<RunResult> runs;  // arm-major, then seed order

  std::vector<const RunResult*> runs_for(const std::string& arm) const;
};

/// One learning run. Non-finite values are recorded as a failure at the step
/// where they occurred rather than thrown.
RunResult run_single(const std::string& arm, const ArmSettings& settings, std::uint64_t seed,
                     const std::string& hash = "");

/// Runs every (arm, seed) pair on up to `workers` threads.
SweepResult run_experiment(const ExperimentConfig& config, int workers = 1);

struct ArmSummary {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<double> finals;  // final windowed reward rate of each successful run
  SampleSummary final_rate;
  int failures = 0;
};

struct ComparisonReport {
  ComparisonSpec arms;
  SampleSummary candidate;
  SampleSummary reference;
  SampleSummary baseline;
  Improvement improvement;
  WelchResult welch;  // candidate vs reference
  bool significant = false;
};

std::vector<ArmSummary> summarize_arms(const SweepResult& sweep, const std::map<std::string, long>& windows);
std::vector<ComparisonReport> aggregate(const std::vector<ArmSummary>& arms,
                                        const std::vector<ComparisonSpec>& comparisons);
/// Name of the arm with the highest mean final reward rate among `names`.
std::string best_arm(const std::vector<ArmSummary>& arms, const std::vector<std::string>& names);

/// Parses "cand:ref:base[,cand:ref:base...]". Each position may list
/// alternatives as "a|b|c"; resolve_best picks the best of them.
std::vector<ComparisonSpec> parse_comparisons(const std::string& spec);
ComparisonSpec resolve_best(const std::vector<ArmSummary>& arms, const ComparisonSpec& spec);

/// Writes config.yaml, runs/<arm>__seed<k>.csv, runs/manifest.json,
/// curves/<arm>.csv, summary.json and reward_rate.svg under `out_dir`.
/// State traces, when kept, go to traces/<arm>__seed<k>.csv.
void emit_outputs(const ExperimentConfig& config, const SweepResult& sweep, const std::filesystem::path& out_dir);

/// Reloads a sweep directory written by emit_outputs.
struct LoadedSweep {
  ExperimentConfig config;
  SweepResult sweep;
};
LoadedSweep load_sweep(const std::filesystem::path& dir);

std::string summary_json(const ExperimentConfig& config, const std::vector<ArmSummary>& arms,
                         const std::vector<ComparisonReport>& reports, const std::string& hash);

/// Mean and standard error across seeds of the windowed rate at every
/// multiple of the logging stride from `window` on.
struct Curve {
  std::vector<long> steps;
  std::vector<double> mean;
  std::vector<double> std_error;
};
Curve arm_curve(const std::vector<const RunResult*>& runs, long window);

std::string render_svg(const std::map<std::string, Curve>& curves, const std::string& title);

}  // namespace crl
