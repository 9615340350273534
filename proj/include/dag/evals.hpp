#pragma once

#include "dag/metrics.hpp"
#include "dag/model.hpp"
#include "dag/rewards.hpp"

namespace dag {

// Terminal-sample evaluation. Reward stats always come from n fresh rollouts;
// discrete chains additionally get exact DP distribution metrics, 2D
// continuous chains a histogram KL against the beta_max-tempered target on a
// fixed grid.
struct EvalSettings {
  std::size_t n_samples = 2048;
  std::size_t hist_bins = 40;
  double hist_range = 3.0;
  std::uint64_t seed = 1;
};

EvalMetrics evaluate_model(const Model& model, const RewardSpec& reward,
                           const EvalSettings& settings);

// Exact terminal distribution of the current discrete policy.
std::vector<double> model_terminal_distribution(const Model& model);

// Normalized tempered target exp(beta * r_raw) over the grid cells.
std::vector<double> tempered_grid_target(const RewardSpec& reward, std::size_t bins,
                                         double range);

// KL(hist || target) over grid cells; empty model cells contribute zero.
double histogram_kl(const std::vector<double>& hist, const std::vector<double>& target);

}  // namespace dag
