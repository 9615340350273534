#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dag/epoch.hpp"
#include "dag/errors.hpp"
#include "dag/oracle.hpp"

using namespace dag;

namespace {

Model tiny_continuous(std::size_t T = 3, std::uint64_t seed = 5) {
  Model m = make_continuous_model(make_schedule(ScheduleKind::Cosine, T), 2, 0, seed);
  m.policy_spec.hidden = {8};
  m.flow_spec.hidden = {8};
  m.theta = net_init(m.policy_spec, seed, false);
  m.phi = net_init(m.flow_spec, seed + 1, true);
  return m;
}

RewardSpec small_ring(double beta_max = 2.0) {
  RewardSpec r = make_ring_reward(1.0);
  r.beta_max = beta_max;
  return r;
}

TransitionBatch sample_batch(const Model& m, const RewardSpec& reward, std::size_t n_traj,
                             double beta, std::uint64_t seed) {
  std::vector<Trajectory> trajs = rollout(m, reward, n_traj, {}, seed);
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t t = 1; t <= m.horizon(); ++t) picks.emplace_back(i, t);
  }
  return make_batch(m, trajs, picks, beta);
}

ParamSet theta_grads_of(const Model& m, const std::function<Var(Tape&, std::span<const Var>)>& b) {
  return grad(m.theta, b).grads;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// One hand-built discrete transition at step t with chosen log terms.
struct HandCase {
  Model model;
  TransitionBatch batch;
};

HandCase hand_discrete_case(double log_flow_parent, double logp, double log_flow_child,
                            double logq, double r_parent, double r_child, double beta,
                            std::size_t t = 2) {
  DiscreteChainSpec chain;
  chain.n_states = 2;
  chain.horizon = 3;
  chain.q.resize(4);
  const double q0 = std::exp(logq);
  for (std::size_t tt = 1; tt <= 3; ++tt) {
    Tensor m({2, 2});
    m.at(0, 0) = q0;
    m.at(0, 1) = 1.0 - q0;
    m.at(1, 0) = 1.0 - q0;
    m.at(1, 1) = q0;
    chain.q[tt] = std::move(m);
  }
  chain.source = {0.5, 0.5};
  HandCase hc{make_discrete_model(chain), {}};

  // logits row for (t, x_t=0): want log p(x_prev=0) == logp
  const double p0 = std::exp(logp);
  Tensor& logits = hc.model.theta.mut("logits");
  logits.at(discrete_row(chain, t, 0), 0) = std::log(p0);
  logits.at(discrete_row(chain, t, 0), 1) = std::log(1.0 - p0);
  Tensor& lf = hc.model.phi.mut("logflow");
  lf.at(discrete_row(chain, t, 0), 0) = log_flow_parent;
  lf.at(discrete_row(chain, t - 1, 0), 0) = log_flow_child;

  TransitionBatch& b = hc.batch;
  b.kind = ChainKind::Discrete;
  b.s_t = {0};
  b.s_prev = {0};
  b.ts = {static_cast<int>(t)};
  b.cond = {-1};
  b.logp_old = {logp};
  b.logq = {logq};
  b.r_fl_parent = {r_parent};
  b.r_fl_child = {r_child};
  b.r_terminal = {r_child};
  b.version = hc.model.version;
  b.beta = beta;
  return hc;
}

}  // namespace

TEST_CASE("db residual: four-term arithmetic on a hand case") {
  // log F(x_t)=1.0, log p=-2.0, log F(x_{t-1})=0.5, log q=-1.8 -> delta=0.3
  HandCase hc = hand_discrete_case(1.0, -2.0, 0.5, -1.8, 0.0, 0.0, /*beta=*/1.0);
  Tape tape;
  auto th = mount_constants(tape, hc.model.theta);
  auto ph = mount_constants(tape, hc.model.phi);
  Var delta = transition_residual(tape, hc.model, th, ph, hc.batch, FlowShaping::None);
  CHECK(tape.val(delta)[0] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("db residual vanishes for the DP-exact flows and policy") {
  DiscreteChainSpec chain = make_lazy_uniform_chain(16, 5);
  std::vector<double> r_table = default_oracle_table(16);
  const double beta = 1.0;
  std::vector<double> logR(16);
  for (std::size_t i = 0; i < 16; ++i) logR[i] = beta * r_table[i];
  ExactSolution sol = exact_flows(chain, logR);

  Model m = make_discrete_model(chain);
  Tensor& logits = m.theta.mut("logits");
  Tensor& logflow = m.phi.mut("logflow");
  for (std::size_t t = 1; t <= 5; ++t) {
    for (std::size_t s = 0; s < 16; ++s) {
      logflow.at(discrete_row(chain, t, s), 0) = sol.log_flow[t][s];
      for (std::size_t j = 0; j < 16; ++j) {
        logits.at(discrete_row(chain, t, s), j) = sol.log_policy[t].at(s, j);
      }
    }
  }
  RewardSpec reward = make_table_reward(r_table);
  reward.beta_max = beta;
  TransitionBatch batch = sample_batch(m, reward, 64, beta, 3);
  Tape tape;
  auto th = mount_constants(tape, m.theta);
  auto ph = mount_constants(tape, m.phi);
  Var delta = transition_residual(tape, m, th, ph, batch, FlowShaping::None);
  const Tensor& d = tape.val(delta);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.numel(); ++i) worst = std::max(worst, std::abs(d[i]));
  CHECK(worst <= 1e-10);
}

TEST_CASE("flow-shift invariance: interior residuals fixed, ends shift oppositely") {
  DiscreteChainSpec chain = make_lazy_uniform_chain(6, 4);
  Model m = make_discrete_model(chain);
  Rng rng(4);
  Tensor& logits = m.theta.mut("logits");
  Tensor& logflow = m.phi.mut("logflow");
  for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = 0.3 * rng.normal();
  for (std::size_t i = 0; i < logflow.numel(); ++i) logflow[i] = 0.5 * rng.normal();
  RewardSpec reward = make_table_reward(default_oracle_table(6));
  TransitionBatch batch = sample_batch(m, reward, 16, 1.0, 9);

  auto residuals = [&](const Model& mm) {
    Tape tape;
    auto th = mount_constants(tape, mm.theta);
    auto ph = mount_constants(tape, mm.phi);
    return tape.val(transition_residual(tape, mm, th, ph, batch, FlowShaping::None)).vec();
  };
  std::vector<double> base = residuals(m);

  const double c = 0.37;
  Model shifted = m;
  Tensor& lf2 = shifted.phi.mut("logflow");
  for (std::size_t t = 1; t <= 3; ++t) {  // interior times 1..T-1
    for (std::size_t s = 0; s < 6; ++s) lf2.at(discrete_row(chain, t, s), 0) += c;
  }
  std::vector<double> moved = residuals(shifted);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const int t = batch.ts[i];
    if (t == 4) {
      CHECK(moved[i] == doctest::Approx(base[i] - c).epsilon(1e-12));
    } else if (t == 1) {
      CHECK(moved[i] == doctest::Approx(base[i] + c).epsilon(1e-12));
    } else {
      CHECK(moved[i] == doctest::Approx(base[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fl-db loss: six-term hand case gives delta 0.1 and loss 0.01") {
  // terms {Ftilde_t, beta r_parent, logp, Ftilde_child, beta r_child, logq}
  HandCase hc = hand_discrete_case(0.2, -2.0, 0.1, -1.9, 1.0, 0.9, /*beta=*/1.0);
  Tape tape;
  auto th = mount_constants(tape, hc.model.theta);
  auto ph = mount_constants(tape, hc.model.phi);
  Var loss = fl_db_loss_graph(tape, hc.model, th, ph, hc.batch);
  CHECK(tape.val(loss)[0] == doctest::Approx(0.01).epsilon(1e-10));
  std::vector<double> b = advantage_b(hc.model, hc.batch);
  CHECK(b[0] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("fl-db telescopes to zero when F-tilde absorbs the shaping") {
  DiscreteChainSpec chain = make_lazy_uniform_chain(8, 4);
  std::vector<double> r_table = default_oracle_table(8);
  const double beta = 1.5;
  std::vector<double> logR(8);
  for (std::size_t i = 0; i < 8; ++i) logR[i] = beta * r_table[i];
  ExactSolution sol = exact_flows(chain, logR);

  Model m = make_discrete_model(chain);
  Tensor& logits = m.theta.mut("logits");
  Tensor& logflow = m.phi.mut("logflow");
  for (std::size_t t = 1; t <= 4; ++t) {
    for (std::size_t s = 0; s < 8; ++s) {
      // F = Ftilde * exp(beta r)  =>  Ftilde = F / shaping
      logflow.at(discrete_row(chain, t, s), 0) = sol.log_flow[t][s] - beta * r_table[s];
      for (std::size_t j = 0; j < 8; ++j) {
        logits.at(discrete_row(chain, t, s), j) = sol.log_policy[t].at(s, j);
      }
    }
  }
  RewardSpec reward = make_table_reward(r_table);
  reward.beta_max = beta;
  TransitionBatch batch = sample_batch(m, reward, 32, beta, 17);
  Tape tape;
  auto th = mount_constants(tape, m.theta);
  auto ph = mount_constants(tape, m.phi);
  Var loss = fl_db_loss_graph(tape, m, th, ph, batch);
  CHECK(tape.val(loss)[0] <= 1e-18);
}

TEST_CASE("advantage b equals the FL residual and carries no gradient") {
  Model m = tiny_continuous();
  RewardSpec reward = small_ring();
  TransitionBatch batch = sample_batch(m, reward, 6, 1.3, 21);
  std::vector<double> b = advantage_b(m, batch);

  Tape tape;
  auto th = mount_constants(tape, m.theta);
  auto ph = mount_constants(tape, m.phi);
  Var delta = transition_residual(tape, m, th, ph, batch, FlowShaping::ForwardLooking);
  CHECK(max_abs_diff(b, tape.val(delta).vec()) <= 1e-12);
}

TEST_CASE("enumerated E_p[b] equals normalized KL minus the log-normalizer") {
  DiscreteChainSpec chain = make_lazy_uniform_chain(5, 3);
  Model m = make_discrete_model(chain);
  Rng rng(2);
  Tensor& logits = m.theta.mut("logits");
  Tensor& logflow = m.phi.mut("logflow");
  for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = 0.4 * rng.normal();
  for (std::size_t i = 0; i < logflow.numel(); ++i) logflow[i] = 0.3 * rng.normal();
  RewardSpec reward = make_table_reward(default_oracle_table(5));
  const double beta = 0.8;
  const std::size_t t = 2, x_t = 3;

  // enumerate all x_prev for the fixed (x_t, t) transition
  std::vector<double> bvals(5), p(5), u(5);
  for (std::size_t j = 0; j < 5; ++j) {
    TransitionBatch one;
    one.kind = ChainKind::Discrete;
    one.s_t = {x_t};
    one.s_prev = {j};
    one.ts = {static_cast<int>(t)};
    one.cond = {-1};
    one.logp_old = {0.0};
    one.logq = {chain.log_q(t, j, x_t)};
    one.r_fl_parent = {reward.table[x_t]};
    one.r_fl_child = {reward.table[j]};
    one.r_terminal = {0.0};
    one.version = m.version;
    one.beta = beta;
    bvals[j] = advantage_b(m, one)[0];
    p[j] = std::exp(discrete_reverse_logpmf(chain, m.theta, x_t, j, t));
    const double log_flow_child =
        logflow.at(discrete_row(chain, t - 1, j), 0) + beta * reward.table[j];
    const double log_flow_parent =
        logflow.at(discrete_row(chain, t, x_t), 0) + beta * reward.table[x_t];
    u[j] = std::exp(log_flow_child + chain.log_q(t, j, x_t) - log_flow_parent);
  }
  double eb = 0.0, s = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    eb += p[j] * bvals[j];
    s += u[j];
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < 5; ++j) kl += p[j] * std::log(p[j] / (u[j] / s));
  CHECK(eb == doctest::Approx(kl - std::log(s)).epsilon(1e-12));
}

TEST_CASE("dag-kl on-policy: loss is mean(b), gradient matches both routes") {
  for (bool discrete : {false, true}) {
    CAPTURE(discrete);
    Model m = discrete ? make_discrete_model(make_lazy_uniform_chain(6, 3))
                       : tiny_continuous();
    RewardSpec reward =
        discrete ? make_table_reward(default_oracle_table(6)) : small_ring();
    if (discrete) {
      Rng rng(12);
      Tensor& logits = m.theta.mut("logits");
      for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = 0.2 * rng.normal();
    }
    const double beta = 0.9;
    TransitionBatch batch = sample_batch(m, reward, 8, beta, 33);
    std::vector<double> b = advantage_b(m, batch);

    // route 1: autodiff through the clipped-ratio loss at theta == theta_old
    GradResult g1 = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
      return dag_kl_policy_loss_graph(t, m, l, batch, b, 1e-4, 1.0, m.version);
    });
    double mean_b = 0.0;
    for (double v : b) mean_b += v;
    mean_b /= static_cast<double>(b.size());
    CHECK(g1.loss == doctest::Approx(mean_b).epsilon(1e-12));

    // route 2: mean(b * logp) with b frozen
    GradResult g2 = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
      Var logp = policy_logp_graph(t, m, l, batch);
      Tensor bt({b.size()});
      for (std::size_t i = 0; i < b.size(); ++i) bt[i] = b[i];
      return t.mean(t.mul(t.constant(bt), logp));
    });

    // route 3: half the FL-DB theta gradient
    GradResult g3 = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
      Tape* tp = &t;
      auto ph = mount_constants(*tp, m.phi);
      return fl_db_loss_graph(t, m, l, ph, batch);
    });

    auto f1 = g1.grads.flatten(), f2 = g2.grads.flatten(), f3 = g3.grads.flatten();
    double w12 = 0.0, w13 = 0.0;
    for (std::size_t i = 0; i < f1.size(); ++i) {
      w12 = std::max(w12, std::abs(f1[i] - f2[i]));
      w13 = std::max(w13, std::abs(f1[i] - 0.5 * f3[i]));
    }
    CHECK(w12 <= 1e-10);
    CHECK(w13 <= 1e-10);
  }
}

TEST_CASE("dag-kl hand case: b=2, ratio 1.00005, eps 1e-4") {
  HandCase hc = hand_discrete_case(0.2, -2.0, 0.1, -1.9, 1.0, 0.9, 1.0);
  // pretend the rollout model was slightly different: ratio = 1.00005
  hc.batch.logp_old = {-2.0 - std::log(1.00005)};
  std::vector<double> b{2.0};
  Tape tape;
  auto th = mount_constants(tape, hc.model.theta);
  Var loss =
      dag_kl_policy_loss_graph(tape, hc.model, th, hc.batch, b, 1e-4, 1.0, hc.model.version);
  CHECK(tape.val(loss)[0] == doctest::Approx(2.0 * 1.00005).epsilon(1e-10));
}

TEST_CASE("dag-kl clip saturation zeroes the gradient") {
  Model m = tiny_continuous();
  RewardSpec reward = small_ring();
  TransitionBatch batch = sample_batch(m, reward, 2, 1.0, 44);
  // shift the cached logp so every ratio is 1 + 2e-4 > 1 + eps
  for (double& lp : batch.logp_old) lp -= std::log(1.0 + 2e-4);
  std::vector<double> b(batch.size(), 1.0);
  GradResult g = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
    return dag_kl_policy_loss_graph(t, m, l, batch, b, 1e-4, 1.0, m.version);
  });
  for (double v : g.grads.flatten()) CHECK(v == 0.0);
}

TEST_CASE("dag-kl policy loss carries zero flow gradients") {
  Model m = tiny_continuous();
  RewardSpec reward = small_ring();
  TransitionBatch batch = sample_batch(m, reward, 4, 1.0, 5);
  std::vector<double> b = advantage_b(m, batch);
  GradResult g = grad(m.phi, [&](Tape& t, std::span<const Var> l) {
    (void)l;  // the policy loss never touches the flow leaves
    auto th = mount_constants(t, m.theta);
    return dag_kl_policy_loss_graph(t, m, th, batch, b, 1e-4, 1.0, m.version);
  });
  for (double v : g.grads.flatten()) CHECK(v == 0.0);
}

TEST_CASE("dag-kl rejects stale batches") {
  Model m = tiny_continuous();
  RewardSpec reward = small_ring();
  TransitionBatch batch = sample_batch(m, reward, 2, 1.0, 8);
  std::vector<double> b(batch.size(), 0.0);
  Tape tape;
  auto th = mount_constants(tape, m.theta);
  CHECK_THROWS_AS(
      dag_kl_policy_loss_graph(tape, m, th, batch, b, 1e-4, 1.0, m.version + 1),
      StaleBatchError);
}

TEST_CASE("kl regularizer: zero at theta_old, ||d||^2 for a shifted final bias") {
  Model m = tiny_continuous();
  RewardSpec reward = small_ring();
  std::vector<Trajectory> trajs = rollout(m, reward, 4, {}, 13);
  // single-t batch so the posterior coefficient is shared
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t i = 0; i < 4; ++i) picks.emplace_back(i, 2);
  TransitionBatch batch = make_batch(m, trajs, picks, 1.0);

  GradResult g0 = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
    return kl_regularizer_graph(t, m, l, batch, 1.0);
  });
  CHECK(g0.loss == 0.0);

  Model shifted = m;
  const double d0 = 0.03, d1 = -0.07;
  Tensor& bias = shifted.theta.mut("layer1.bias");
  bias[0] += d0;
  bias[1] += d1;
  GradResult g1 = grad(shifted.theta, [&](Tape& t, std::span<const Var> l) {
    return kl_regularizer_graph(t, shifted, l, batch, 1.0);
  });
  const double cxh = m.sched.at(2).post_xhat_coef;
  const double expect = cxh * cxh * (d0 * d0 + d1 * d1);
  CHECK(g1.loss == doctest::Approx(expect).epsilon(1e-10));

  // one small step decreases the regularizer
  ParamSet clipped = clip_global_norm(g1.grads, 1.0);
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  OptimizerState opt = OptimizerState::init(shifted.theta, cfg);
  AdamWResult r = adamw_step(shifted.theta, clipped, std::move(opt));
  Model after = shifted;
  after.theta = std::move(r.params);
  GradResult g2 = grad(after.theta, [&](Tape& t, std::span<const Var> l) {
    return kl_regularizer_graph(t, after, l, batch, 1.0);
  });
  CHECK(g2.loss < g1.loss);
}

TEST_CASE("ddpo: advantages whiten per batch, degenerate cases error") {
  Model m = tiny_continuous();
  RewardSpec reward = small_ring();
  TransitionBatch batch = sample_batch(m, reward, 8, 1.0, 3);
  std::vector<double> adv = ddpo_advantages(batch);
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));

  TransitionBatch one;
  one.kind = ChainKind::Discrete;
  one.ts = {1};
  one.cond = {-1};
  one.s_t = {0};
  one.s_prev = {0};
  one.logp_old = {0.0};
  one.logq = {0.0};
  one.r_fl_parent = {0.0};
  one.r_fl_child = {0.0};
  one.r_terminal = {1.0};
  CHECK_THROWS_AS(ddpo_advantages(one), ContractError);
}

TEST_CASE("ddpo: equal rewards mean zero advantages, zero loss and gradient") {
  DiscreteChainSpec chain = make_lazy_uniform_chain(4, 2);
  Model m = make_discrete_model(chain);
  // exactly representable value: the group mean is then exact and A == 0
  RewardSpec reward = make_table_reward(std::vector<double>(4, 0.5));
  TransitionBatch batch = sample_batch(m, reward, 6, 1.0, 77);
  std::vector<double> adv = ddpo_advantages(batch);
  for (double a : adv) CHECK(a == 0.0);
  GradResult g = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
    return ddpo_loss_graph(t, m, l, batch, adv, 1e-4, m.version);
  });
  CHECK(g.loss == 0.0);
  for (double v : g.grads.flatten()) CHECK(v == 0.0);
}

TEST_CASE("ddpo: unit advantage at ratio one contributes -1") {
  HandCase hc = hand_discrete_case(0.0, -1.2, 0.0, -1.0, 0.0, 0.0, 1.0);
  std::vector<double> adv{1.0};
  Tape tape;
  auto th = mount_constants(tape, hc.model.theta);
  Var loss = ddpo_loss_graph(tape, hc.model, th, hc.batch, adv, 1e-4, hc.model.version);
  CHECK(tape.val(loss)[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("ddpo clip: favorable saturation stops the gradient, unfavorable keeps it") {
  Model m = tiny_continuous();
  RewardSpec reward = small_ring();
  TransitionBatch batch = sample_batch(m, reward, 2, 1.0, 15);
  const double eps = 1e-4;

  // ratio above 1+eps with positive advantage: min picks the clipped branch
  TransitionBatch up = batch;
  for (double& lp : up.logp_old) lp -= std::log(1.0 + 5e-4);
  std::vector<double> pos(up.size(), 1.0);
  GradResult gup = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
    return ddpo_loss_graph(t, m, l, up, pos, eps, m.version);
  });
  for (double v : gup.grads.flatten()) CHECK(v == 0.0);

  // same ratio with negative advantage: min keeps the unclipped branch
  std::vector<double> neg(up.size(), -1.0);
  GradResult gdn = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
    return ddpo_loss_graph(t, m, l, up, neg, eps, m.version);
  });
  double total = 0.0;
  for (double v : gdn.grads.flatten()) total += std::abs(v);
  CHECK(total > 0.0);
}

TEST_CASE("finite-difference suite over the training losses") {
  Model m = tiny_continuous(3, 9);
  RewardSpec reward = small_ring(2.0);
  TransitionBatch batch = sample_batch(m, reward, 4, 1.1, 51);

  auto check_fd = [&](const ParamSet& params,
                      const std::function<Var(Tape&, std::span<const Var>)>& builder,
                      double step, double tol) {
    GradResult g = grad(params, builder);
    auto loss_at = [&](const std::vector<double>& flat) {
      ParamSet p2 = params;
      p2.unflatten(flat);
      return grad(p2, builder).loss;
    };
    std::vector<double> fd = finite_diff(loss_at, params.flatten(), step);
    std::vector<double> ad = g.grads.flatten();
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, rel_err(ad[i], fd[i]));
    CHECK(worst <= tol);
  };

  // fl-db in theta and phi jointly
  ParamSet joint = ParamSet::join({{"policy.", &m.theta}, {"flow.", &m.phi}});
  const std::size_t n_theta = m.theta.size();
  check_fd(joint, [&](Tape& t, std::span<const Var> l) {
    Model local = m;
    local.theta = ParamSet::zeros_like(m.theta);  // values come from leaves
    return fl_db_loss_graph(t, m, l.subspan(0, n_theta), l.subspan(n_theta), batch);
  }, 1e-5, 1e-4);

  // dag-kl at theta == theta_old with frozen b (step small enough to stay
  // strictly inside the clip band)
  std::vector<double> b = advantage_b(m, batch);
  check_fd(m.theta, [&](Tape& t, std::span<const Var> l) {
    return dag_kl_policy_loss_graph(t, m, l, batch, b, 1e-4, 1.0, m.version);
  }, 1e-8, 1e-4);

  // ddpo at theta == theta_old (equal-branch region is smooth)
  std::vector<double> adv = ddpo_advantages(batch);
  check_fd(m.theta, [&](Tape& t, std::span<const Var> l) {
    return ddpo_loss_graph(t, m, l, batch, adv, 1e-4, m.version);
  }, 1e-8, 1e-4);

  // kl regularizer around a perturbed theta
  Model shifted = m;
  Rng rng(3);
  for (std::size_t i = 0; i < shifted.theta.size(); ++i) {
    Tensor& t = shifted.theta.value(i);
    for (std::size_t j = 0; j < t.numel(); ++j) t[j] += 0.01 * rng.normal();
  }
  check_fd(shifted.theta, [&](Tape& t, std::span<const Var> l) {
    return kl_regularizer_graph(t, shifted, l, batch, 1.0);
  }, 1e-5, 1e-4);
}

TEST_CASE("fl-db theta gradient equals 2 mean(delta grad logp)") {
  Model m = tiny_continuous(3, 19);
  RewardSpec reward = small_ring();
  TransitionBatch batch = sample_batch(m, reward, 5, 0.8, 29);
  std::vector<double> delta = advantage_b(m, batch);

  GradResult direct = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
    auto ph = mount_constants(t, m.phi);
    return fl_db_loss_graph(t, m, l, ph, batch);
  });
  GradResult surrogate = grad(m.theta, [&](Tape& t, std::span<const Var> l) {
    Var logp = policy_logp_graph(t, m, l, batch);
    Tensor w({delta.size()});
    for (std::size_t i = 0; i < delta.size(); ++i) w[i] = 2.0 * delta[i];
    return t.mean(t.mul(t.constant(w), logp));
  });
  auto fa = direct.grads.flatten(), fb = surrogate.grads.flatten();
  double worst = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) worst = std::max(worst, std::abs(fa[i] - fb[i]));
  CHECK(worst <= 1e-10);
}

TEST_CASE("terminal anchoring: t=1 child side is exactly beta*r_raw(x0)") {
  Model m = tiny_continuous(3, 23);
  RewardSpec reward = small_ring();
  std::vector<Trajectory> trajs = rollout(m, reward, 3, {}, 61);
  std::vector<std::pair<std::size_t, std::size_t>> picks{{0, 1}, {1, 1}, {2, 1}};
  const double beta = 1.7;
  TransitionBatch batch = make_batch(m, trajs, picks, beta);
  std::vector<double> delta = advantage_b(m, batch);

  for (std::size_t i = 0; i < 3; ++i) {
    // recompute the residual by hand: the child flow term must be the anchor
    Tape tape;
    auto ph = mount_constants(tape, m.phi);
    std::vector<int> t1{1};
    Tensor x({1, 2});
    x.at(0, 0) = batch.x_t.at(i, 0);
    x.at(0, 1) = batch.x_t.at(i, 1);
    Var fparent =
        tape.sum_rows(net_apply(tape, m.flow_spec, ph, tape.constant(x), t1, {}));
    const double hand = tape.val(fparent)[0] + beta * batch.r_fl_parent[i] +
                        batch.logp_old[i] - 0.0 - beta * trajs[i].r_terminal -
                        batch.logq[i];
    CHECK(delta[i] == doctest::Approx(hand).epsilon(1e-10));
  }
}

TEST_CASE("align epochs are deterministic and respect config defaults") {
  AlignConfig defaults;
  CHECK(defaults.rollouts_per_epoch == 512);
  CHECK(defaults.opt_steps_per_epoch == 8);
  CHECK(defaults.lr == 3e-4);
  CHECK(defaults.clip_eps == 1e-4);
  CHECK(defaults.kl_reg_coef == 1.0);
  CHECK(defaults.grad_clip_norm == 1.0);
  CHECK(defaults.epochs == 100);

  DiscreteChainSpec chain = make_lazy_uniform_chain(8, 4);
  RewardSpec reward = make_table_reward(default_oracle_table(8));
  reward.beta_max = 1.0;

  for (Algorithm algo : {Algorithm::DagDb, Algorithm::DagKl, Algorithm::Ddpo}) {
    CAPTURE(algorithm_name(algo));
    AlignConfig cfg;
    cfg.algo = algo;
    cfg.rollouts_per_epoch = 16;
    cfg.opt_steps_per_epoch = 4;
    cfg.lr = 1e-2;
    cfg.epochs = 2;

    auto run = [&]() {
      AlignState st = init_align_state(make_discrete_model(chain), cfg, 99);
      std::vector<EpochMetrics> ms;
      for (std::size_t e = 0; e < 2; ++e) ms.push_back(align_epoch(st, cfg, reward, 2));
      return ms;
    };
    std::vector<EpochMetrics> a = run(), b = run();
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(a[e].reward_mean == b[e].reward_mean);
      CHECK(a[e].grad_norm_theta == b[e].grad_norm_theta);
      CHECK(a[e].beta == beta_at(reward, e, 2));
    }
  }
}

TEST_CASE("align_epoch validates the rollout/step divisibility invariant") {
  AlignConfig cfg;
  cfg.rollouts_per_epoch = 3;
  cfg.opt_steps_per_epoch = 7;  // 3 * horizon not divisible by 7
  DiscreteChainSpec chain = make_lazy_uniform_chain(4, 3);
  CHECK_THROWS_AS(init_align_state(make_discrete_model(chain), cfg, 1), ConfigError);
}
