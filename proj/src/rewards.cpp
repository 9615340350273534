#include <limits>
#include <algorithm>
#include "dag/rewards.hpp"

#include <cmath>
#include <numbers>

#include "dag/errors.hpp"

namespace dag {

RewardSpec make_gmm_reward(std::vector<std::array<double, 2>> centers,
                           std::vector<double> weights, double sigma) {
  if (centers.empty() || centers.size() != weights.size() || sigma <= 0.0) {
    throw ContractError("gmm reward: bad parameters");
  }
  RewardSpec s;
  s.id = "gmm";
  s.gmm_centers = std::move(centers);
  double wsum = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw ContractError("gmm reward: weights must be positive");
    wsum += w;
  }
  for (double& w : weights) w /= wsum;
  s.gmm_weights = std::move(weights);
  s.gmm_sigma = sigma;
  return s;
}

RewardSpec make_ring_reward(double radius) {
  if (radius <= 0.0) throw ContractError("ring reward: radius must be positive");
  RewardSpec s;
  s.id = "ring";
  s.ring_radius = radius;
  return s;
}

RewardSpec make_quadrant_reward() {
  RewardSpec s;
  s.id = "quadrant";
  return s;
}

RewardSpec make_table_reward(std::vector<double> table) {
  if (table.empty()) throw ContractError("table reward: empty table");
  RewardSpec s;
  s.id = "table";
  s.table = std::move(table);
  return s;
}

RewardSpec make_classifier_reward(std::size_t n_classes, double radius) {
  if (n_classes < 2) throw ContractError("classifier reward: need >= 2 classes");
  RewardSpec s;
  s.id = "classifier";
  s.clf_w = Tensor({n_classes, 2});
  s.clf_b = Tensor({n_classes});
  // Bayes-style logistic weights for unit-variance blobs at the class centers.
  for (std::size_t k = 0; k < n_classes; ++k) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(n_classes);
    const double cx = radius * std::cos(ang);
    const double cy = radius * std::sin(ang);
    s.clf_w.at(k, 0) = cx;
    s.clf_w.at(k, 1) = cy;
    s.clf_b[k] = -0.5 * (cx * cx + cy * cy);
  }
  return s;
}

std::vector<double> default_oracle_table(std::size_t n_states) {
  // Two bumps; values are log R with R in [1, 10].
  std::vector<double> t(n_states);
  const double s = static_cast<double>(n_states);
  for (std::size_t k = 0; k < n_states; ++k) {
    const double u = static_cast<double>(k);
    const double peak1 = std::exp(-0.5 * (u - 0.25 * s) * (u - 0.25 * s));
    const double peak2 = std::exp(-0.5 * (u - 0.75 * s) * (u - 0.75 * s));
    const double r = 1.0 + 9.0 * std::max(peak1, 0.6 * peak2);
    t[k] = std::log(r);
  }
  return t;
}

namespace {

double gmm_logdensity(const RewardSpec& s, double x, double y) {
  const double inv2s2 = 1.0 / (2.0 * s.gmm_sigma * s.gmm_sigma);
  const double lognorm = -std::log(2.0 * std::numbers::pi * s.gmm_sigma * s.gmm_sigma);
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(s.gmm_centers.size());
  for (std::size_t k = 0; k < s.gmm_centers.size(); ++k) {
    const double dx = x - s.gmm_centers[k][0];
    const double dy = y - s.gmm_centers[k][1];
    terms[k] = std::log(s.gmm_weights[k]) + lognorm - (dx * dx + dy * dy) * inv2s2;
    mx = std::max(mx, terms[k]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

}  // namespace

double eval_raw_reward(const RewardSpec& spec, const Tensor& x0, int cond) {
  if (x0.numel() < 2 && spec.id != "table") {
    throw ContractError("eval_raw_reward: expected 2D input for reward " + spec.id);
  }
  if (spec.id == "gmm") return gmm_logdensity(spec, x0[0], x0[1]);
  if (spec.id == "ring") {
    const double r = std::sqrt(x0[0] * x0[0] + x0[1] * x0[1]);
    const double d = r - spec.ring_radius;
    return -d * d;
  }
  if (spec.id == "quadrant") {
    // Squared distance to the positive quadrant, negated.
    const double dx = std::max(0.0, -x0[0]);
    const double dy = std::max(0.0, -x0[1]);
    return -(dx * dx + dy * dy);
  }
  if (spec.id == "classifier") {
    const std::size_t k = spec.clf_b.numel();
    if (cond < 0 || static_cast<std::size_t>(cond) >= k) {
      throw ContractError("classifier reward: condition id out of range");
    }
    std::vector<double> logits(k);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      logits[i] = spec.clf_w.at(i, 0) * x0[0] + spec.clf_w.at(i, 1) * x0[1] + spec.clf_b[i];
      mx = std::max(mx, logits[i]);
    }
    double acc = 0.0;
    for (double v : logits) acc += std::exp(v - mx);
    return logits[static_cast<std::size_t>(cond)] - (mx + std::log(acc));
  }
  throw ContractError("unknown reward id: " + spec.id);
}

double eval_raw_reward_discrete(const RewardSpec& spec, std::size_t state) {
  if (spec.id != "table") {
    throw ContractError("discrete reward lookup needs a table reward, got " + spec.id);
  }
  if (state >= spec.table.size()) throw ContractError("table reward: state out of range");
  return spec.table[state];
}

double beta_at(const RewardSpec& spec, std::uint64_t step, std::uint64_t total_steps) {
  if (step > total_steps) throw ContractError("beta_at: step > total_steps");
  const double ramp = spec.anneal_fraction * static_cast<double>(total_steps);
  if (ramp <= 0.0) return spec.beta_max;
  const double frac = static_cast<double>(step) / ramp;
  return spec.beta_max * std::min(1.0, frac);
}

double log_reward(const RewardSpec& spec, const Tensor& x0, int cond,
                  std::uint64_t step, std::uint64_t total_steps) {
  return beta_at(spec, step, total_steps) * eval_raw_reward(spec, x0, cond);
}

}  // namespace dag
