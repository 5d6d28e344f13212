#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace crl {

enum class CenteringMode { off, td_based, moving_average, reference_states };

CenteringMode centering_mode_from_string(const std::string& name);
std::string to_string(CenteringMode mode);

struct CenteringConfig {
  CenteringMode mode = CenteringMode::off;
  /// Step size for td_based, averaging rate for moving_average.
  double beta = 1e-2;
  double initial_rbar = 0.0;

  bool operator==(const CenteringConfig&) const = default;
};

/// Sweep values used for each mode.
inline const std::vector<double> kTdBasedBetaSweep{3e-2, 1e-2, 3e-3, 1e-3, 3e-4};
inline const std::vector<double> kMovingAverageBetaSweep{0.99, 0.999, 0.9999};

using TDErrorBatch = Eigen::VectorXd;

/// The reward-rate estimate r-bar and its update rule.
///
/// The estimate is kept as the configured initial value plus a learned
/// drift, and rewards are centered as (r - initial) - drift. Shifting every
/// reward and the initial value by the same constant therefore leaves the
/// centered rewards bit-identical whenever r + c is exact.
class RewardRateEstimator {
 public:
  RewardRateEstimator() = default;
  explicit RewardRateEstimator(CenteringConfig config);

  const CenteringConfig& config() const { return config_; }
  CenteringMode mode() const { return config_.mode; }
  bool enabled() const { return config_.mode != CenteringMode::off; }

  /// Current r-bar; 0 when centering is off.
  double value() const;

  /// r - r-bar, computed so that it is shift-exact (see class comment).
  double centered_reward(double reward) const;

  /// delta_i - r-bar for every element; r-bar is not touched.
  TDErrorBatch center_batch(const TDErrorBatch& raw_deltas) const;

  /// r-bar += beta * mean(centered_deltas).
  void td_based_update(const TDErrorBatch& centered_deltas);
  /// r-bar += step_size * sum(centered_deltas) / n, for callers that own the
  /// step size (tabular agents use eta * alpha).
  void td_based_update(const TDErrorBatch& centered_deltas, double step_size);

  /// r-bar <- beta r-bar + (1 - beta) reward; once per environment step.
  void moving_average_update(double reward);

  /// In reference_states mode r-bar is recomputed by the agent before each
  /// use and installed here.
  void set_reference_value(double value);

 private:
  void require(CenteringMode mode, const char* op) const;

  CenteringConfig config_;
  double drift_ = 0.0;
};

/// Mean of q over the reference set. With twin critics, the average of both.
double reference_state_value(std::span<const double> values);
double reference_state_value(std::span<const double> values_1, std::span<const double> values_2);

struct RoundCentering {
  TDErrorBatch centered;
  double rbar_used = 0.0;
};

/// Centers a whole PPO round with the r-bar held at the start of the epoch,
/// then applies a single td_based update from the round's mean centered
/// error. Called once per epoch.
RoundCentering ppo_round_center(RewardRateEstimator& estimator, const TDErrorBatch& round_deltas);

}  // namespace crl
