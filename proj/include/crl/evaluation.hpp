#pragma once

#include "crl/environment.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crl {

/// One logged block of `count` consecutive steps ending at `step`. With a
/// logging stride of 1 every block is a single step.
struct RunRecord {
  long step = 0;
  double reward = 0.0;  // mean reward over the block
  int resets = 0;
  std::optional<double> rbar;  // r-bar at the end of the block
  int count = 1;

  bool operator==(const RunRecord&) const = default;
};

/// Append-only record stream for one run. Steps must arrive as 1, 2, 3, ...;
/// rewards are aggregated into blocks of `stride` steps.
class RunLog {
 public:
  explicit RunLog(long stride = 1, bool keep_trace = false);

  void append(long step, double reward, bool reset_occurred, std::optional<double> rbar = std::nullopt,
              const Observation* state = nullptr);
  /// Flushes a trailing partial block; further appends are rejected.
  void finish();
  /// Rebuilds a log from stored blocks (CSV reload).
  static RunLog from_records(std::vector<RunRecord> records, long stride);

  const std::vector<RunRecord>& records() const { return records_; }
  const std::vector<Observation>& trace() const { return trace_; }
  long steps() const { return last_step_; }
  long stride() const { return stride_; }
  bool finished() const { return finished_; }
  long total_resets() const;

  std::uint64_t seed = 0;
  std::string config_hash;

 private:
  void flush();

  long stride_;
  bool keep_trace_;
  bool finished_ = false;
  long last_step_ = 0;
  double block_sum_ = 0.0;
  int block_count_ = 0;
  int block_resets_ = 0;
  std::optional<double> block_rbar_;
  std::vector<RunRecord> records_;
  std::vector<Observation> trace_;
};

/// Mean reward over the last `window` steps. The window must cover whole
/// logged blocks; throws std::invalid_argument when the log is too short.
double windowed_reward_rate(const RunLog& log, long window = 10'000);
/// The same rate ending at `end_step` (a block boundary).
double windowed_reward_rate_at(const RunLog& log, long end_step, long window);
double windowed_reward_rate(std::span<const double> rewards, long window = 10'000);

struct SampleSummary {
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(n); 0 for n < 2
};

SampleSummary summarize(std::span<const double> values);

using EnvironmentFactory = std::function<std::unique_ptr<Environment>(std::uint64_t seed)>;
/// A frozen policy; the generator is private to the deployment seed.
using FrozenPolicy = std::function<Action(const Observation&, Rng&)>;

struct DeploymentResult {
  std::vector<double> reward_rates;
  std::vector<double> reset_counts;
  SampleSummary reward_rate;
  SampleSummary resets;
};

/// Runs `policy` for `steps` steps on a fresh environment per seed, with no
/// learning, and counts reset_occurred flags.
DeploymentResult deploy_and_count(const EnvironmentFactory& make_env, const FrozenPolicy& policy, long steps,
                                  std::span<const std::uint64_t> seeds);

/// Reward rate of the uniform policy over the action space.
double random_policy_baseline(const EnvironmentFactory& make_env, long steps, std::span<const std::uint64_t> seeds);

struct Improvement {
  double value = 0.0;
  /// False when the candidate falls below the baseline; such entries are
  /// reported as N/A.
  bool applicable = true;
};

/// (candidate - baseline) / (reference - baseline) - 1. Throws
/// std::domain_error when reference == baseline.
Improvement percent_improvement(double candidate, double reference, double baseline);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Two-sided Welch test. Both samples need at least two values. With zero
/// variance on both sides the result is p = 1 for equal means and p = 0
/// otherwise (t = +-inf, df = NaN).
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// P(|T| > |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

}  // namespace crl
