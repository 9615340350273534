#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dag/errors.hpp"
#include "dag/gaussian.hpp"
#include "dag/pretrain.hpp"
#include "dag/rollout.hpp"

using namespace dag;

namespace {

RewardSpec unit_ring() { return make_ring_reward(1.0); }

Model small_model(std::size_t T = 5, std::uint64_t seed = 11) {
  Model m = make_continuous_model(make_schedule(ScheduleKind::Cosine, T), 2, 0, seed);
  m.policy_spec.hidden = {16};
  m.flow_spec.hidden = {16};
  m.theta = net_init(m.policy_spec, seed, false);
  m.phi = net_init(m.flow_spec, seed + 1, true);
  return m;
}

}  // namespace

TEST_CASE("cosine schedule hits the closed form at T=2") {
  NoiseSchedule s = make_schedule(ScheduleKind::Cosine, 2);
  const double c = std::cos(std::numbers::pi / 4.0);
  CHECK(s.alpha[1] == doctest::Approx(std::sqrt(c * c)).epsilon(1e-14));
  CHECK(s.alpha[1] * s.alpha[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("schedule invariants for both kinds and several horizons") {
  for (ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::LinearCumulative}) {
    for (std::size_t T : {1u, 2u, 5u, 20u, 50u}) {
      NoiseSchedule s = make_schedule(kind, T);
      CHECK(s.alpha[0] == 1.0);
      CHECK(s.sigma[0] == 0.0);
      for (std::size_t t = 0; t <= T; ++t) {
        CHECK(std::abs(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t] - 1.0) <= 1e-12);
        if (t >= 1) {
          CHECK(s.alpha[t] < s.alpha[t - 1]);
          // reverse variance is the forward variance by construction
          const double fwd = 1.0 - (s.alpha[t] / s.alpha[t - 1]) * (s.alpha[t] / s.alpha[t - 1]);
          CHECK(s.at(t).var == doctest::Approx(fwd).epsilon(1e-14));
        }
      }
    }
  }
  CHECK_THROWS_AS(make_schedule(ScheduleKind::Cosine, 0), ContractError);
  // a flat stretch of alpha_bar is a degenerate (zero-variance) kernel
  CHECK_THROWS_AS(make_schedule_from_alpha_bar({1.0, 0.5, 0.5}), NumericalError);
}

TEST_CASE("posterior sampling with zero noise returns the mean") {
  NoiseSchedule s = make_schedule(ScheduleKind::Cosine, 6);
  Tensor mean({2, 2});
  mean.at(0, 0) = 0.4;
  mean.at(1, 1) = -0.9;
  std::vector<int> ts{2, 5};
  Tensor zero({2, 2});
  Tensor draw = posterior_sample(s, mean, zero, ts);
  CHECK(draw.vec() == mean.vec());
  Tensor eps = Tensor::from({2, 2}, {1.0, -1.0, 0.5, 2.0});
  Tensor d2 = posterior_sample(s, mean, eps, ts);
  CHECK(d2.at(0, 0) == mean.at(0, 0) + s.at(2).sqrt_var * 1.0);
  CHECK(d2.at(1, 1) == mean.at(1, 1) + s.at(5).sqrt_var * 2.0);
}

TEST_CASE("forward kernel log-density") {
  // alpha ratio 0.8 -> variance 0.36; at the mean the density is the
  // normalizer alone.
  NoiseSchedule s = make_schedule_from_alpha_bar({1.0, 0.64});
  Tensor x_prev = Tensor::row({1.0});
  Tensor x_t = Tensor::row({0.8});
  const double lp = q_transition_logpdf(s, x_t, x_prev, 1);
  CHECK(lp == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 0.36)).epsilon(1e-12));
  CHECK(lp == doctest::Approx(-0.408113).epsilon(1e-5));

  // symmetry around the mean
  Tensor plus = Tensor::row({0.8 + 0.3});
  Tensor minus = Tensor::row({0.8 - 0.3});
  CHECK(q_transition_logpdf(s, plus, x_prev, 1) ==
        doctest::Approx(q_transition_logpdf(s, minus, x_prev, 1)).epsilon(1e-14));

  // isotropic factorization: d-dimensional value equals sum of 1-d values
  Tensor xp3 = Tensor::row({1.0, -0.5, 2.0});
  Tensor xt3 = Tensor::row({0.7, 0.1, 1.9});
  double sum1d = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    sum1d += q_transition_logpdf(s, Tensor::row({xt3[j]}), Tensor::row({xp3[j]}), 1);
  }
  CHECK(q_transition_logpdf(s, xt3, xp3, 1) == doctest::Approx(sum1d).epsilon(1e-13));
}

TEST_CASE("marginal sampling") {
  NoiseSchedule s = make_schedule(ScheduleKind::Cosine, 10);
  Tensor x0 = Tensor::row({0.4, -1.2});
  Tensor eps = Tensor::row({0.9, 0.3});
  Tensor at0 = q_marginal_sample(s, x0, 0, eps);
  CHECK(at0[0] == x0[0]);
  CHECK(at0[1] == x0[1]);

  Tensor zero = Tensor::row({0.0, 0.0});
  Tensor att = q_marginal_sample(s, zero, 7, eps);
  CHECK(att[0] == doctest::Approx(s.sigma[7] * eps[0]).epsilon(1e-15));

  // empirical variance of x_t around alpha_t x0 over many draws
  Rng rng(123);
  const std::size_t n = 100000;
  const std::size_t t = 6;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor e = Tensor::row({rng.normal()});
    Tensor xt = q_marginal_sample(s, Tensor::row({0.4}), t, e);
    const double dev = xt[0] - s.alpha[t] * 0.4;
    ss += dev * dev;
  }
  const double var_hat = ss / static_cast<double>(n);
  const double expected = s.sigma[t] * s.sigma[t];
  // var of the variance estimator is 2 var^2 / n
  const double se = expected * std::sqrt(2.0 / static_cast<double>(n));
  CHECK(std::abs(var_hat - expected) <= 3.0 * se);
}

TEST_CASE("posterior parameterization") {
  // t=1: sigma_0 = 0, alpha_0 = 1 -> mean collapses to xhat
  NoiseSchedule s = make_schedule(ScheduleKind::Cosine, 3);
  Tensor x({1, 2}), xhat({1, 2});
  x.at(0, 0) = 0.3;
  x.at(0, 1) = -0.7;
  xhat.at(0, 0) = 1.5;
  xhat.at(0, 1) = 0.2;
  std::vector<int> t1{1};
  Tensor mean = posterior_mean(s, x, xhat, t1);
  CHECK(mean.at(0, 0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(mean.at(0, 1) == doctest::Approx(0.2).epsilon(1e-12));

  // hand case: alpha_{t-1} = 0.9, alpha_t = 0.8, x_t = 1, xhat = 2 (1D)
  NoiseSchedule s2 = make_schedule_from_alpha_bar({1.0, 0.81, 0.64});
  Tensor x1({1, 1}), xh1({1, 1});
  x1.at(0, 0) = 1.0;
  xh1.at(0, 0) = 2.0;
  std::vector<int> t2{2};
  Tensor m2 = posterior_mean(s2, x1, xh1, t2);
  const double expected = (0.19 * 0.8 * 1.0 + (0.81 - 0.64) * 2.0) / (0.36 * 0.9);
  CHECK(m2.at(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(m2.at(0, 0) == doctest::Approx(1.51852).epsilon(1e-5));
  CHECK(s2.at(2).var == doctest::Approx(1.0 - 0.64 / 0.81).epsilon(1e-12));
}

TEST_CASE("reverse logpdf at the mean is the normalizer") {
  NoiseSchedule s = make_schedule(ScheduleKind::Cosine, 4);
  Tensor mean({1, 2});
  mean.at(0, 0) = 0.1;
  mean.at(0, 1) = -0.4;
  std::vector<int> ts{3};
  std::vector<double> lp = reverse_logpdf_rows(s, mean, mean, ts);
  const double var = s.at(3).var;
  CHECK(lp[0] == doctest::Approx(-1.0 * std::log(2.0 * std::numbers::pi * var)).epsilon(1e-12));
}

TEST_CASE("rollout shapes, determinism and cache consistency") {
  Model m = small_model();
  RewardSpec reward = unit_ring();
  std::vector<Trajectory> a = rollout(m, reward, 4, {}, 99);
  CHECK(a.size() == 4);
  for (const Trajectory& tr : a) {
    CHECK(tr.states.size() == 6);
    CHECK(tr.logp.size() == 6);
    for (std::size_t t = 1; t <= 5; ++t) CHECK(std::isfinite(tr.logp[t]));
    CHECK(tr.version == m.version);
  }

  std::vector<Trajectory> b = rollout(m, reward, 4, {}, 99);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t t = 0; t <= 5; ++t) {
      CHECK(a[i].states[t].vec() == b[i].states[t].vec());
    }
    CHECK(a[i].logp == b[i].logp);
  }

  // cached log-probabilities equal recomputation under the same parameters
  for (const Trajectory& tr : a) {
    for (std::size_t t = 1; t <= 5; ++t) {
      CHECK(std::abs(tr.logp[t] - recompute_logp(m, tr, t)) <= 1e-12);
    }
  }

  // prefix independence: first k trajectories of a bigger batch are identical
  std::vector<Trajectory> big = rollout(m, reward, 8, {}, 99);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(big[i].states[0].vec() == a[i].states[0].vec());
  }
}

TEST_CASE("zero-prediction net keeps terminal samples centered") {
  Model m = small_model();
  // zero the policy net entirely: xhat == 0 for every input
  for (std::size_t i = 0; i < m.theta.size(); ++i) {
    Tensor& t = m.theta.value(i);
    for (std::size_t j = 0; j < t.numel(); ++j) t[j] = 0.0;
  }
  RewardSpec reward = unit_ring();
  const std::size_t n = 20000;
  std::vector<Trajectory> trajs = rollout(m, reward, n, {}, 7);
  double mean0 = 0.0, mean1 = 0.0, ss0 = 0.0, ss1 = 0.0;
  for (const Trajectory& tr : trajs) {
    mean0 += tr.states[0][0];
    mean1 += tr.states[0][1];
  }
  mean0 /= n;
  mean1 /= n;
  for (const Trajectory& tr : trajs) {
    ss0 += (tr.states[0][0] - mean0) * (tr.states[0][0] - mean0);
    ss1 += (tr.states[0][1] - mean1) * (tr.states[0][1] - mean1);
  }
  const double se0 = std::sqrt(ss0 / n) / std::sqrt(static_cast<double>(n));
  const double se1 = std::sqrt(ss1 / n) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean0) <= 3.0 * se0);
  CHECK(std::abs(mean1) <= 3.0 * se1);
}

TEST_CASE("rollout divergence carries the completed prefix length") {
  Model m = small_model();
  // blow up the final layer so xhat overflows into the state update
  Tensor& w = m.theta.mut("layer1.weight");
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 1e308;
  try {
    rollout(m, unit_ring(), 2, {}, 5);
    FAIL("expected divergence");
  } catch (const RolloutDivergence& e) {
    CHECK(e.steps_completed < m.sched.horizon);
  } catch (const NumericalError&) {
    // net overflow detected before the state update is also acceptable
  }
}

TEST_CASE("pretrain step: zero net gives mean squared norm, matching data gives zero") {
  Model m = small_model(5, 3);
  for (std::size_t i = 0; i < m.theta.size(); ++i) {
    Tensor& t = m.theta.value(i);
    for (std::size_t j = 0; j < t.numel(); ++j) t[j] = 0.0;
  }
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  OptimizerState opt = OptimizerState::init(m.theta, cfg);

  Tensor x0({8, 2});
  Rng rng(2);
  for (std::size_t i = 0; i < x0.numel(); ++i) x0[i] = rng.normal();
  double msn = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    msn += x0.at(i, 0) * x0.at(i, 0) + x0.at(i, 1) * x0.at(i, 1);
  }
  msn /= 8.0;
  Rng step_rng(5);
  const double loss = denoising_pretrain_step(m, opt, x0, {}, step_rng);
  CHECK(loss == doctest::Approx(msn).epsilon(1e-12));

  // x0 == 0 with the zero net: the prediction is exact, loss 0
  Model m2 = small_model(5, 3);
  for (std::size_t i = 0; i < m2.theta.size(); ++i) {
    Tensor& t = m2.theta.value(i);
    for (std::size_t j = 0; j < t.numel(); ++j) t[j] = 0.0;
  }
  OptimizerState opt2 = OptimizerState::init(m2.theta, cfg);
  Tensor zeros({8, 2});
  Rng step_rng2(5);
  CHECK(denoising_pretrain_step(m2, opt2, zeros, {}, step_rng2) == 0.0);
}

TEST_CASE("pretraining decreases the denoising loss (moving average)") {
  Model m = small_model(8, 31);
  AdamWConfig cfg;
  cfg.lr = 2e-3;
  OptimizerState opt = OptimizerState::init(m.theta, cfg);
  Rng data_rng(77);
  Rng step_rng(78);

  auto draw_batch = [&](std::size_t n) {
    // two tight modes
    Tensor x({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      const double cx = data_rng.uniform() < 0.5 ? -1.0 : 1.0;
      x.at(i, 0) = cx + 0.1 * data_rng.normal();
      x.at(i, 1) = -cx + 0.1 * data_rng.normal();
    }
    return x;
  };

  const std::size_t steps = 400;
  std::vector<double> losses(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor batch = draw_batch(64);
    losses[s] = denoising_pretrain_step(m, opt, batch, {}, step_rng);
  }
  auto ma10 = [&](std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = end - 10; i < end; ++i) acc += losses[i];
    return acc / 10.0;
  };
  const double first = ma10(10), mid = ma10(steps / 2), last = ma10(steps);
  CHECK(mid < first);
  CHECK(last < mid);
  CHECK(last < 0.5 * first);
}

TEST_CASE("discrete chain kernels and reverse policy") {
  DiscreteChainSpec chain = make_lazy_uniform_chain(8, 4);
  chain.validate();
  // doubly stochastic columns
  for (std::size_t t = 1; t <= 4; ++t) {
    for (std::size_t j = 0; j < 8; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < 8; ++i) col += chain.q[t].at(i, j);
      CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  ParamSet policy = discrete_policy_init(chain);
  // uniform logits -> log(1/S)
  CHECK(discrete_reverse_logpmf(chain, policy, 3, 5, 2) ==
        doctest::Approx(std::log(1.0 / 8.0)).epsilon(1e-14));

  // dominant logit saturates to ~0
  Tensor& logits = policy.mut("logits");
  const std::size_t row = discrete_row(chain, 2, 3);
  logits.at(row, 5) = 50.0;
  CHECK(discrete_reverse_logpmf(chain, policy, 3, 5, 2) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // normalization sweep
  Rng rng(6);
  for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = rng.normal();
  for (std::size_t t = 1; t <= 4; ++t) {
    for (std::size_t st = 0; st < 8; ++st) {
      double total = 0.0;
      for (std::size_t sp = 0; sp < 8; ++sp) {
        total += std::exp(discrete_reverse_logpmf(chain, policy, st, sp, t));
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }

  CHECK_THROWS_AS(discrete_reverse_logpmf(chain, policy, 9, 0, 1), ContractError);
}

TEST_CASE("discrete rollout matches its caches and is deterministic") {
  DiscreteChainSpec chain = make_lazy_uniform_chain(6, 3);
  Model m = make_discrete_model(chain);
  RewardSpec reward = make_table_reward({0.1, 0.2, 0.5, 0.9, 0.3, 0.0});
  std::vector<Trajectory> a = rollout(m, reward, 10, {}, 21);
  std::vector<Trajectory> b = rollout(m, reward, 10, {}, 21);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a[i].istates == b[i].istates);
    CHECK(a[i].logp == b[i].logp);
    CHECK(a[i].r_terminal == reward.table[a[i].istates[0]]);
    CHECK(a[i].r_fl[0] == a[i].r_terminal);
    for (std::size_t t = 1; t <= 3; ++t) {
      CHECK(a[i].r_fl[t] == reward.table[a[i].istates[t]]);
      CHECK(std::abs(a[i].logp[t] - recompute_logp(m, a[i], t)) <= 1e-15);
    }
  }
}
