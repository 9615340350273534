#include "dag/rollout.hpp"

#include <cmath>

#include "dag/errors.hpp"
#include "dag/gaussian.hpp"

namespace dag {

Model make_continuous_model(NoiseSchedule sched, std::size_t data_dim,
                            std::size_t cond_count, std::uint64_t seed) {
  Model m;
  m.kind = ChainKind::Continuous;
  m.policy_spec.data_dim = data_dim;
  m.policy_spec.out_dim = data_dim;
  m.policy_spec.horizon = sched.horizon;
  m.policy_spec.cond_count = cond_count;
  m.flow_spec = m.policy_spec;
  m.flow_spec.out_dim = 1;
  m.sched = std::move(sched);
  m.theta = net_init(m.policy_spec, seed, /*zero_final=*/false);
  // Flow starts at log F-tilde = 0: the FL prior where the flow is purely the
  // shaping reward.
  m.phi = net_init(m.flow_spec, seed + 1, /*zero_final=*/true);
  return m;
}

Model make_discrete_model(DiscreteChainSpec chain) {
  chain.validate();
  Model m;
  m.kind = ChainKind::Discrete;
  m.policy_spec.data_dim = 1;  // unused; keeps data_dim() harmless
  m.theta = discrete_policy_init(chain);
  m.phi = discrete_flow_init(chain);
  m.chain = std::move(chain);
  return m;
}

namespace {

std::vector<Trajectory> rollout_continuous(const Model& model, const RewardSpec& reward,
                                           std::size_t n, std::span<const int> conds,
                                           std::uint64_t seed) {
  const std::size_t T = model.sched.horizon;
  const std::size_t d = model.policy_spec.data_dim;
  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) streams.push_back(Rng::stream(seed, i));

  std::vector<Trajectory> trajs(n);
  std::vector<int> cs(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!conds.empty()) cs[i] = conds[i];
    trajs[i].cond = cs[i];
    trajs[i].states.resize(T + 1);
    trajs[i].logp.assign(T + 1, 0.0);
    trajs[i].xhat.resize(T + 1);
    trajs[i].r_fl.assign(T + 1, 0.0);
    trajs[i].version = model.version;
  }

  // x_T ~ N(0, I), one row per trajectory.
  Tensor x({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = streams[i].normal();
  }
  for (std::size_t i = 0; i < n; ++i) {
    Tensor row({d});
    for (std::size_t j = 0; j < d; ++j) row[j] = x.at(i, j);
    trajs[i].states[T] = std::move(row);
  }

  std::span<const int> cspan = model.policy_spec.cond_count > 0
                                   ? std::span<const int>(cs)
                                   : std::span<const int>();
  for (std::size_t t = T; t >= 1; --t) {
    std::vector<int> ts(n, static_cast<int>(t));
    Tensor xhat = net_forward(model.policy_spec, model.theta, x, ts, cspan);
    Tensor mean = posterior_mean(model.sched, x, xhat, ts);
    Tensor eps({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) eps.at(i, j) = streams[i].normal();
    }
    Tensor x_prev = posterior_sample(model.sched, mean, eps, ts);
    if (!x_prev.all_finite() || !xhat.all_finite()) {
      throw RolloutDivergence(
          "rollout diverged at t=" + std::to_string(t) + " (non-finite state)", T - t);
    }
    std::vector<double> lp = reverse_logpdf_rows(model.sched, mean, x_prev, ts);
    for (std::size_t i = 0; i < n; ++i) {
      Tensor xh({d}), xp({d});
      for (std::size_t j = 0; j < d; ++j) {
        xh[j] = xhat.at(i, j);
        xp[j] = x_prev.at(i, j);
      }
      trajs[i].logp[t] = lp[i];
      trajs[i].r_fl[t] = eval_raw_reward(reward, xh, cs[i]);
      trajs[i].xhat[t] = std::move(xh);
      trajs[i].states[t - 1] = std::move(xp);
    }
    x = std::move(x_prev);
  }

  for (std::size_t i = 0; i < n; ++i) {
    trajs[i].r_terminal = eval_raw_reward(reward, trajs[i].states[0], cs[i]);
    trajs[i].r_fl[0] = trajs[i].r_terminal;
  }
  return trajs;
}

std::vector<Trajectory> rollout_discrete(const Model& model, const RewardSpec& reward,
                                         std::size_t n, std::span<const int> conds,
                                         std::uint64_t seed) {
  const DiscreteChainSpec& chain = model.chain;
  const std::size_t T = chain.horizon;
  std::vector<Tensor> tables = discrete_policy_tables(chain, model.theta);

  std::vector<Trajectory> trajs(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, i);
    Trajectory& tr = trajs[i];
    tr.cond = conds.empty() ? -1 : conds[i];
    tr.istates.resize(T + 1);
    tr.logp.assign(T + 1, 0.0);
    tr.r_fl.assign(T + 1, 0.0);
    tr.version = model.version;

    std::size_t s = rng.categorical(chain.source);
    tr.istates[T] = s;
    for (std::size_t t = T; t >= 1; --t) {
      const Tensor& table = tables[t];
      std::vector<double> row(chain.n_states);
      for (std::size_t j = 0; j < chain.n_states; ++j) row[j] = table.at(s, j);
      const std::size_t nxt = rng.categorical(row);
      tr.logp[t] = discrete_reverse_logpmf(chain, model.theta, s, nxt, t);
      // Identity data prediction: the shaping reward is evaluated at the
      // state itself.
      tr.r_fl[t] = eval_raw_reward_discrete(reward, s);
      tr.istates[t - 1] = nxt;
      s = nxt;
    }
    tr.r_terminal = eval_raw_reward_discrete(reward, tr.istates[0]);
    tr.r_fl[0] = tr.r_terminal;
  }
  return trajs;
}

}  // namespace

std::vector<Trajectory> rollout(const Model& model, const RewardSpec& reward,
                                std::size_t n, std::span<const int> conds,
                                std::uint64_t seed) {
  if (n < 1) throw ContractError("rollout: n must be >= 1");
  if (!conds.empty() && conds.size() != n) {
    throw ContractError("rollout: conds size mismatch");
  }
  return model.kind == ChainKind::Continuous
             ? rollout_continuous(model, reward, n, conds, seed)
             : rollout_discrete(model, reward, n, conds, seed);
}

double recompute_logp(const Model& model, const Trajectory& traj, std::size_t t) {
  if (model.kind == ChainKind::Discrete) {
    return discrete_reverse_logpmf(model.chain, model.theta, traj.istates[t],
                                   traj.istates[t - 1], t);
  }
  const std::size_t d = model.policy_spec.data_dim;
  Tensor x({1, d}), xp({1, d});
  for (std::size_t j = 0; j < d; ++j) {
    x.at(0, j) = traj.states[t][j];
    xp.at(0, j) = traj.states[t - 1][j];
  }
  std::vector<int> ts{static_cast<int>(t)};
  std::vector<int> cs{traj.cond};
  std::span<const int> cspan = model.policy_spec.cond_count > 0
                                   ? std::span<const int>(cs)
                                   : std::span<const int>();
  Tensor xhat = net_forward(model.policy_spec, model.theta, x, ts, cspan);
  Tensor mean = posterior_mean(model.sched, x, xhat, ts);
  return reverse_logpdf_rows(model.sched, mean, xp, ts)[0];
}

}  // namespace dag
