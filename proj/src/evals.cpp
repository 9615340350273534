#include "dag/evals.hpp"

#include <cmath>

#include "dag/errors.hpp"
#include "dag/oracle.hpp"
#include "dag/rollout.hpp"

namespace dag {

std::vector<double> model_terminal_distribution(const Model& model) {
  if (model.kind != ChainKind::Discrete) {
    throw ContractError("exact terminal distribution needs a discrete chain");
  }
  return terminal_distribution(model.chain,
                               discrete_policy_tables(model.chain, model.theta));
}

std::vector<double> tempered_grid_target(const RewardSpec& reward, std::size_t bins,
                                         double range) {
  std::vector<double> logw(bins * bins);
  const double cell = 2.0 * range / static_cast<double>(bins);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t iy = 0; iy < bins; ++iy) {
    for (std::size_t ix = 0; ix < bins; ++ix) {
      const double x = -range + (static_cast<double>(ix) + 0.5) * cell;
      const double y = -range + (static_cast<double>(iy) + 0.5) * cell;
      const double lw = reward.beta_max * eval_raw_reward(reward, Tensor::row({x, y}), -1);
      logw[iy * bins + ix] = lw;
      mx = std::max(mx, lw);
    }
  }
  double z = 0.0;
  for (double lw : logw) z += std::exp(lw - mx);
  std::vector<double> out(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) out[i] = std::exp(logw[i] - mx) / z;
  return out;
}

double histogram_kl(const std::vector<double>& hist, const std::vector<double>& target) {
  if (hist.size() != target.size()) throw ContractError("histogram_kl: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (hist[i] <= 0.0) continue;
    kl += hist[i] * std::log(hist[i] / std::max(target[i], 1e-300));
  }
  return kl;
}

EvalMetrics evaluate_model(const Model& model, const RewardSpec& reward,
                           const EvalSettings& settings) {
  if (settings.n_samples == 0) throw ContractError("evaluate_model: need n >= 1 samples");
  EvalMetrics em;

  std::vector<int> conds;
  if (model.kind == ChainKind::Continuous && model.policy_spec.cond_count > 0) {
    Rng crng(settings.seed ^ 0x9154a7d3ULL);
    conds.resize(settings.n_samples);
    for (auto& c : conds) {
      c = static_cast<int>(crng.uniform_index(model.policy_spec.cond_count));
    }
  }
  std::vector<Trajectory> trajs =
      rollout(model, reward, settings.n_samples, conds, settings.seed);
  double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
  for (const Trajectory& tr : trajs) {
    sum += tr.r_terminal;
    mx = std::max(mx, tr.r_terminal);
  }
  em.reward_mean = sum / static_cast<double>(trajs.size());
  em.reward_max = mx;
  double ss = 0.0;
  for (const Trajectory& tr : trajs) {
    const double d = tr.r_terminal - em.reward_mean;
    ss += d * d;
  }
  em.reward_std = std::sqrt(ss / static_cast<double>(trajs.size()));

  if (model.kind == ChainKind::Discrete) {
    std::vector<double> logR(model.chain.n_states);
    for (std::size_t s = 0; s < model.chain.n_states; ++s) {
      logR[s] = reward.beta_max * eval_raw_reward_discrete(reward, s);
    }
    ExactSolution sol = exact_flows(model.chain, logR);
    std::vector<double> opt = terminal_distribution(model.chain, sol.policy);
    std::vector<double> rz = reward_distribution(logR);
    std::vector<double> pt = model_terminal_distribution(model);
    em.tv_opt = total_variation(pt, opt);
    em.tv_rz = total_variation(pt, rz);
    double kl = 0.0;
    for (std::size_t i = 0; i < pt.size(); ++i) {
      if (pt[i] > 0.0) kl += pt[i] * std::log(pt[i] / std::max(opt[i], 1e-300));
    }
    em.kl_opt = kl;
  } else if (model.data_dim() == 2) {
    const std::size_t bins = settings.hist_bins;
    std::vector<double> hist(bins * bins, 0.0);
    const double range = settings.hist_range;
    const double cell = 2.0 * range / static_cast<double>(bins);
    std::size_t inside = 0;
    for (const Trajectory& tr : trajs) {
      const double x = tr.states[0][0], y = tr.states[0][1];
      if (x < -range || x >= range || y < -range || y >= range) continue;
      const std::size_t ix = static_cast<std::size_t>((x + range) / cell);
      const std::size_t iy = static_cast<std::size_t>((y + range) / cell);
      hist[iy * bins + ix] += 1.0;
      ++inside;
    }
    if (inside > 0) {
      for (double& h : hist) h /= static_cast<double>(inside);
      em.hist_kl = histogram_kl(hist, tempered_grid_target(reward, bins, range));
    }
  }
  return em;
}

}  // namespace dag
