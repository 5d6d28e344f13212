#include "crl/evaluation.hpp"
#include "crl/agent.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace crl {

RunLog::RunLog(long stride, bool keep_trace) : stride_(stride), keep_trace_(keep_trace) {
  if (stride_ < 1) {
    throw std::invalid_argument("log stride must be at least 1");
  }
}

void RunLog::append(long step, double reward, bool reset_occurred, std::optional<double> rbar,
                    const Observation* state) {
  if (finished_) {
    throw std::logic_error("append to a finished run log");
  }
  if (step != last_step_ + 1) {
    throw std::invalid_argument("run log steps must increase by one from 1 (got " + std::to_string(step) +
                                " after " + std::to_string(last_step_) + ")");
  }
  last_step_ = step;
  block_sum_ += reward;
  ++block_count_;
  block_resets_ += reset_occurred ? 1 : 0;
  block_rbar_ = rbar;
  if (keep_trace_ && state) {
    trace_.push_back(*state);
  }
  if (block_count_ == stride_) {
    flush();
  }
}

void RunLog::flush() {
  if (block_count_ == 0) {
    return;
  }
  records_.push_back({last_step_, block_sum_ / static_cast<double>(block_count_), block_resets_, block_rbar_,
                      block_count_});
  block_sum_ = 0.0;
  block_count_ = 0;
  block_resets_ = 0;
  block_rbar_.reset();
}

void RunLog::finish() {
  flush();
  finished_ = true;
}

RunLog RunLog::from_records(std::vector<RunRecord> records, long stride) {
  RunLog log(stride);
  long previous = 0;
  for (auto& r : records) {
    if (r.step <= previous) {
      throw std::invalid_argument("run log steps must be strictly increasing");
    }
    r.count = static_cast<int>(r.step - previous);
    previous = r.step;
  }
  log.records_ = std::move(records);
  log.last_step_ = previous;
  log.finished_ = true;
  return log;
}

long RunLog::total_resets() const {
  long total = block_resets_;
  for (const auto& r : records_) {
    total += r.resets;
  }
  return total;
}

double windowed_reward_rate_at(const RunLog& log, long end_step, long window) {
  if (window < 1) {
    throw std::invalid_argument("window must be positive");
  }
  if (end_step > log.steps() || window > end_step) {
    throw std::invalid_argument("run log is shorter than the window (" + std::to_string(end_step) + " < " +
                                std::to_string(window) + ")");
  }
  const auto& records = log.records();
  auto it = records.rbegin();
  while (it != records.rend() && it->step > end_step) {
    ++it;
  }
  if (it == records.rend() || it->step != end_step) {
    throw std::invalid_argument("window end is not a logged block boundary");
  }
  double sum = 0.0;
  long covered = 0;
  for (; it != records.rend() && covered < window; ++it) {
    sum += it->reward * it->count;
    covered += it->count;
  }
  if (covered != window) {
    throw std::invalid_argument("window does not align with the logging stride");
  }
  return sum / static_cast<double>(window);
}

double windowed_reward_rate(const RunLog& log, long window) {
  return windowed_reward_rate_at(log, log.records().empty() ? 0 : log.records().back().step, window);
}

double windowed_reward_rate(std::span<const double> rewards, long window) {
  if (window < 1 || static_cast<std::size_t>(window) > rewards.size()) {
    throw std::invalid_argument("reward stream is shorter than the window");
  }
  double sum = 0.0;
  for (std::size_t i = rewards.size() - static_cast<std::size_t>(window); i < rewards.size(); ++i) {
    sum += rewards[i];
  }
  return sum / static_cast<double>(window);
}

DeploymentResult deploy_and_count(const EnvironmentFactory& make_env, const FrozenPolicy& policy, long steps,
                                  std::span<const std::uint64_t> seeds) {
  if (steps < 1) {
    throw std::invalid_argument("deployment needs at least one step");
  }
  DeploymentResult result;
  for (std::uint64_t seed : seeds) {
    auto env = make_env(seed);
    Rng rng = child_stream(seed, "explore");
    Observation obs = env->observation();
    double total = 0.0;
    long resets = 0;
    for (long t = 0; t < steps; ++t) {
      EnvStep step = env->step(policy(obs, rng));
      total += step.reward;
      resets += step.reset_occurred ? 1 : 0;
      obs = std::move(step.observation);
    }
    result.reward_rates.push_back(total / static_cast<double>(steps));
    result.reset_counts.push_back(static_cast<double>(resets));
  }
  result.reward_rate = summarize(result.reward_rates);
  result.resets = summarize(result.reset_counts);
  return result;
}

double random_policy_baseline(const EnvironmentFactory& make_env, long steps, std::span<const std::uint64_t> seeds) {
  std::optional<Space> space;
  const FrozenPolicy uniform = [&](const Observation&, Rng& rng) { return uniform_action(*space, rng); };
  const EnvironmentFactory remember = [&](std::uint64_t seed) {
    auto env = make_env(seed);
    space = env->action_space();
    return env;
  };
  return deploy_and_count(remember, uniform, steps, seeds).reward_rate.mean;
}

}  // namespace crl
