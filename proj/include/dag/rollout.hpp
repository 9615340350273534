#pragma once

#include <span>

#include "dag/model.hpp"
#include "dag/rewards.hpp"
#include "dag/rng.hpp"

namespace dag {

// One reverse rollout x_T -> x_0 with everything the objectives need cached:
// per-transition log p under the rollout-time parameters, the x-hat
// predictions (continuous), the raw rewards at the forward-looking shaping
// points, and the terminal raw reward. Indexing is by diffusion time t.
struct Trajectory {
  int cond = -1;

  std::vector<Tensor> states;        // continuous: [0..T], each [d]
  std::vector<std::size_t> istates;  // discrete:   [0..T]

  std::vector<double> logp;   // [0..T]; logp[t] = log p(x_{t-1}|x_t), [0] unused
  std::vector<Tensor> xhat;   // continuous: [0..T]; xhat[t] = xhat(x_t, t), [0] unused
  std::vector<double> r_fl;   // [0..T]; t>=1: r_raw at the shaping point of (x_t,t);
                              // r_fl[0] = r_raw(x_0) (the terminal anchor)
  double r_terminal = 0.0;
  std::uint64_t version = 0;
};

// n independent trajectories. Per-trajectory noise comes from
// Rng::stream(seed, index), so any execution order gives identical results.
// conds: one condition id per trajectory, or empty for unconditional.
// Throws RolloutDivergence if a state goes non-finite.
std::vector<Trajectory> rollout(const Model& model, const RewardSpec& reward,
                                std::size_t n, std::span<const int> conds,
                                std::uint64_t seed);

// Recomputes log p(x_{t-1}|x_t) for one cached transition under the given
// parameters; used for cache-consistency checks and tests.
double recompute_logp(const Model& model, const Trajectory& traj, std::size_t t);

}  // namespace dag
