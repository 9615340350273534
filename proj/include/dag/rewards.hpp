#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dag/tensor.hpp"

namespace dag {

// Black-box terminal reward. Callers only ever see scalar values; nothing
// here exposes a gradient. log R = beta * r_raw, with beta annealed linearly
// from 0 over the first `anneal_fraction` of training.
struct RewardSpec {
  std::string id;  // gmm | ring | quadrant | table | classifier
  double beta_max = 100.0;
  double anneal_fraction = 0.5;

  // gmm: log-density of an isotropic 2D mixture
  std::vector<std::array<double, 2>> gmm_centers;
  std::vector<double> gmm_weights;  // normalized on construction
  double gmm_sigma = 1.0;

  // ring: r_raw = -(|x| - radius)^2
  double ring_radius = 1.0;

  // table: r_raw(k) = table[k] (discrete chains)
  std::vector<double> table;

  // classifier: log p(class = c | x) of a fixed logistic model
  Tensor clf_w;  // [K, 2]
  Tensor clf_b;  // [K]
};

RewardSpec make_gmm_reward(std::vector<std::array<double, 2>> centers,
                           std::vector<double> weights, double sigma);
RewardSpec make_ring_reward(double radius);
RewardSpec make_quadrant_reward();
RewardSpec make_table_reward(std::vector<double> table);
// K logistic classes with centers evenly spaced on a circle of given radius.
RewardSpec make_classifier_reward(std::size_t n_classes, double radius);

// The default lookup table for the oracle chain: log of a bimodal positive
// profile with max(R)/min(R) = 10.
std::vector<double> default_oracle_table(std::size_t n_states);

double eval_raw_reward(const RewardSpec& spec, const Tensor& x0, int cond);
double eval_raw_reward_discrete(const RewardSpec& spec, std::size_t state);

double beta_at(const RewardSpec& spec, std::uint64_t step, std::uint64_t total_steps);
double log_reward(const RewardSpec& spec, const Tensor& x0, int cond,
                  std::uint64_t step, std::uint64_t total_steps);

}  // namespace dag
