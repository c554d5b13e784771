#pragma once

#include <functional>
#include <vector>

#include "batchens/models.hpp"

namespace batchens {

struct ForecastConfig {
  int horizon = 5;        // H
  int total_paths = 2000;  // split evenly across members
  int context_len = 12;   // L
  double noise_scale = 1.0;  // 0 disables sampling noise: deterministic rollout

  void validate(int members) const;
  int paths_per_member(int members) const { return total_paths / members; }
};

// Sampled trajectories, H values per (member, path) pair.
struct ForecastPaths {
  int K = 1, S = 1, H = 1;
  std::vector<double> values;  // index ((k*S + s)*H + h)

  double at(int k, int s, int h) const {
    return values[(static_cast<size_t>(k) * S + s) * static_cast<size_t>(H) + h];
  }
  double& at(int k, int s, int h) {
    return values[(static_cast<size_t>(k) * S + s) * static_cast<size_t>(H) + h];
  }
};

// Pooled per-step moments over all K*S paths; the variance uses the
// population normalization 1/(K*S).
struct ForecastResult {
  std::vector<double> mean;      // H entries
  std::vector<double> variance;  // H entries
};

// Rollout driver state: advance() feeds the previously sampled values
// (rows-by-1, row r belongs to member r % K) into the recurrence; emit()
// reads the per-row predictive mean and standard deviation at the current
// state. All model state lives inside the hooks.
struct RolloutHooks {
  std::function<void(const Tensor& x)> advance;
  std::function<void(std::vector<double>& mu, std::vector<double>& sigma)> emit;
};

// Draws K*S ancestral trajectories: each step samples
//   y = mu + noise_scale * sigma * eps,  eps ~ N(0,1),
// and feeds the sample back as the next input. Noise is drawn in a fixed
// row order so results are seed-stable.
ForecastPaths sample_paths(RolloutHooks& hooks, int members, int paths_per_member, int horizon,
                           double noise_scale, Rng& rng);

// Rolls a trained sequence model out of an observed context window.
ForecastPaths ancestral_paths(Model& model, const std::vector<double>& context,
                              const ForecastConfig& cfg, Rng& rng);

ForecastResult aggregate_forecast(const ForecastPaths& paths);

// Member-level path moments: mean and population variance of member k's
// paths at each step. Feeds the regression uncertainty decomposition.
struct MemberForecastMoments {
  int K = 1, H = 1;
  std::vector<double> mean;      // K*H
  std::vector<double> variance;  // K*H
  double mean_at(int k, int h) const { return mean[static_cast<size_t>(k) * H + h]; }
  double var_at(int k, int h) const { return variance[static_cast<size_t>(k) * H + h]; }
};
MemberForecastMoments member_moments(const ForecastPaths& paths);

}  // namespace batchens
