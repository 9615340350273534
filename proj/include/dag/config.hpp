#pragma once

#include <cstdint>
#include <string>

#include "dag/epoch.hpp"
#include "dag/model.hpp"
#include "dag/rewards.hpp"

namespace dag {

// Sectioned key=value run configuration. Parsing is strict: unknown sections
// or keys are hard errors with line context, referenced files must exist, and
// the normalized dump is canonical (fixed order, shortest-round-trip floats),
// so dump(parse(x)) is idempotent.

struct TaskConfig {
  std::string kind = "continuous";  // continuous | discrete
  std::size_t dim = 2;
  std::size_t horizon = 0;  // 0 = default (20 continuous, 5 discrete)
  std::string schedule = "cosine";
  std::string dataset;        // pretraining data path (continuous)
  std::size_t conditions = 0;  // 0 = unconditional
  std::size_t states = 16;     // discrete
  double stay_prob = 0.3;      // discrete lazy-uniform kernel
};

struct RewardConfig {
  std::string id = "ring";
  double beta_max = 100.0;
  double anneal_fraction = 0.5;
  double radius = 1.0;                 // ring
  double sigma = 0.3;                  // gmm
  std::string centers = "1,0;-1,0";    // gmm: "x,y;x,y;..."
  std::string weights = "1,1";         // gmm
  std::string table = "auto";          // discrete: "auto" or "v0,v1,..."
  std::size_t classes = 4;             // classifier
};

struct AlgorithmConfig {
  std::string name = "dag-db";
  double learning_rate = 3e-4;
  double weight_decay = 0.0;
  double clip_epsilon = 1e-4;
  double ppo_clip_epsilon = 1e-4;
  double kl_reg_coef = 1.0;
  double grad_clip_norm = 1.0;
  std::size_t rollouts_per_epoch = 512;
  std::size_t opt_steps_per_epoch = 8;
  std::size_t epochs = 100;
  std::string kl_beta_scale = "none";  // none | final-beta
  std::string init_checkpoint;
  std::size_t pretrain_steps = 2000;
  std::size_t pretrain_batch = 128;
  double pretrain_lr = 1e-3;
};

struct RunSection {
  std::uint64_t seed = 0;
  std::string out = "runs/out";
  std::size_t eval_every = 10;
  std::size_t eval_samples = 2048;
  std::size_t hist_bins = 40;
  double hist_range = 3.0;
};

struct RunConfig {
  TaskConfig task;
  RewardConfig reward;
  AlgorithmConfig algorithm;
  RunSection run;

  std::size_t horizon() const;
  std::string normalized_dump() const;
  std::uint64_t config_hash() const;  // over the normalized dump
  // config_hash minus the output directory: a resumed run may write somewhere
  // else, everything else must match.
  std::uint64_t semantic_hash() const;
  std::uint64_t task_hash() const;    // over [task]+[reward]: checkpoint compatibility
  std::string task_label() const;     // short id for plots
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

Model build_model(const RunConfig& cfg, std::uint64_t seed);
RewardSpec build_reward(const RunConfig& cfg);
AlignConfig build_align_config(const RunConfig& cfg);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace dag
