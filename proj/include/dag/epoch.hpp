#pragma once

#include <optional>
#include <string>

#include "dag/objectives.hpp"
#include "dag/optim.hpp"

namespace dag {

enum class Algorithm { DagDb, DagKl, Ddpo };

Algorithm algorithm_from(const std::string& name);
std::string algorithm_name(Algorithm a);

struct AlignConfig {
  Algorithm algo = Algorithm::DagDb;
  double lr = 3e-4;
  double weight_decay = 0.0;
  double clip_eps = 1e-4;      // DAG-KL ratio clip
  double ppo_clip_eps = 1e-4;  // DDPO ratio clip
  double kl_reg_coef = 1.0;
  double grad_clip_norm = 1.0;
  std::size_t rollouts_per_epoch = 512;
  std::size_t opt_steps_per_epoch = 8;
  std::size_t epochs = 100;
  // "final beta on the KL gradient term": off multiplies the DAG-KL policy
  // loss by 1, on multiplies it by beta_max.
  bool kl_scale_final_beta = false;

  void validate(std::size_t horizon) const;
};

struct EpochMetrics {
  std::uint64_t epoch = 0;
  std::uint64_t global_step = 0;
  double wall_s = 0.0;
  double reward_mean = 0.0, reward_max = 0.0, reward_std = 0.0;
  // Loss components averaged over the epoch's optimization steps; NaN when
  // the component does not apply to the algorithm.
  double loss_fl_db, loss_dag_kl, loss_kl_reg, loss_ddpo;
  double beta = 0.0;
  double grad_norm_theta = 0.0, grad_norm_phi = 0.0;
};

struct AlignState {
  Model model;
  OptimizerState opt_theta;
  OptimizerState opt_phi;
  std::uint64_t epoch = 0;
  std::uint64_t global_step = 0;
  Rng rng{0};
};

AlignState init_align_state(Model model, const AlignConfig& cfg, std::uint64_t seed);

// One epoch of Algorithm 1: snapshot, rollout, per-transition minibatch
// updates, metrics. Advances state.epoch / global_step / model.version.
EpochMetrics align_epoch(AlignState& st, const AlignConfig& cfg,
                         const RewardSpec& reward, std::uint64_t total_epochs);

}  // namespace dag
