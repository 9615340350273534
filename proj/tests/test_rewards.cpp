#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dag/errors.hpp"
#include "dag/rewards.hpp"
#include "dag/rng.hpp"

using namespace dag;

TEST_CASE("gmm reward: single unit-variance component at the origin") {
  RewardSpec s = make_gmm_reward({{0.0, 0.0}}, {1.0}, 1.0);
  CHECK(eval_raw_reward(s, Tensor::row({0.0, 0.0}), -1) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-13));
  // off-mode value drops by the quadratic term
  CHECK(eval_raw_reward(s, Tensor::row({1.0, 0.0}), -1) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi) - 0.5).epsilon(1e-13));
}

TEST_CASE("gmm reward: mixture log-density matches direct summation") {
  RewardSpec s = make_gmm_reward({{1.0, 0.0}, {-1.0, 0.5}}, {2.0, 1.0}, 0.5);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const double x = rng.normal(), y = rng.normal();
    double direct = 0.0;
    const double w[2] = {2.0 / 3.0, 1.0 / 3.0};
    const double cx[2] = {1.0, -1.0}, cy[2] = {0.0, 0.5};
    for (int k = 0; k < 2; ++k) {
      const double d2 = (x - cx[k]) * (x - cx[k]) + (y - cy[k]) * (y - cy[k]);
      direct += w[k] / (2.0 * std::numbers::pi * 0.25) * std::exp(-d2 / (2.0 * 0.25));
    }
    CHECK(eval_raw_reward(s, Tensor::row({x, y}), -1) ==
          doctest::Approx(std::log(direct)).epsilon(1e-12));
  }
}

TEST_CASE("ring reward peaks on the circle") {
  RewardSpec s = make_ring_reward(1.5);
  CHECK(eval_raw_reward(s, Tensor::row({1.5, 0.0}), -1) == 0.0);
  CHECK(eval_raw_reward(s, Tensor::row({0.0, -1.5}), -1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(eval_raw_reward(s, Tensor::row({0.0, 0.0}), -1) == doctest::Approx(-2.25));
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const double x = 2.0 * rng.normal(), y = 2.0 * rng.normal();
    CHECK(eval_raw_reward(s, Tensor::row({x, y}), -1) <= 0.0);
  }
}

TEST_CASE("quadrant reward is zero inside, negative squared distance outside") {
  RewardSpec s = make_quadrant_reward();
  CHECK(eval_raw_reward(s, Tensor::row({0.5, 2.0}), -1) == 0.0);
  CHECK(eval_raw_reward(s, Tensor::row({-1.0, 2.0}), -1) == doctest::Approx(-1.0));
  CHECK(eval_raw_reward(s, Tensor::row({-1.0, -2.0}), -1) == doctest::Approx(-5.0));
}

TEST_CASE("table reward looks up states and rejects others") {
  RewardSpec s = make_table_reward({1.0, 2.0, 3.0});
  CHECK(eval_raw_reward_discrete(s, 0) == 1.0);
  CHECK(eval_raw_reward_discrete(s, 2) == 3.0);
  CHECK_THROWS_AS(eval_raw_reward_discrete(s, 3), ContractError);
  CHECK_THROWS_AS(eval_raw_reward_discrete(make_ring_reward(1.0), 0), ContractError);
}

TEST_CASE("classifier reward is a log-probability") {
  RewardSpec s = make_classifier_reward(4, 2.0);
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    Tensor x = Tensor::row({rng.normal(), rng.normal()});
    double total = 0.0;
    for (int c = 0; c < 4; ++c) {
      const double lp = eval_raw_reward(s, x, c);
      CHECK(lp <= 0.0);
      total += std::exp(lp);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(eval_raw_reward(s, Tensor::row({0.0, 0.0}), -1), ContractError);
}

TEST_CASE("unknown reward id raises a registry error") {
  RewardSpec s;
  s.id = "nope";
  CHECK_THROWS_AS(eval_raw_reward(s, Tensor::row({0.0, 0.0}), -1), ContractError);
}

TEST_CASE("beta annealing endpoints and interpolation") {
  RewardSpec s = make_ring_reward(1.0);
  s.beta_max = 100.0;
  s.anneal_fraction = 0.5;
  CHECK(beta_at(s, 0, 100) == 0.0);
  CHECK(beta_at(s, 50, 100) == doctest::Approx(100.0));
  CHECK(beta_at(s, 25, 100) == doctest::Approx(50.0));
  CHECK(beta_at(s, 75, 100) == doctest::Approx(100.0));  // clipped at beta_max
  CHECK(beta_at(s, 100, 100) == doctest::Approx(100.0));
  CHECK_THROWS_AS(beta_at(s, 101, 100), ContractError);

  // non-decreasing over a sweep, never above beta_max
  double prev = -1.0;
  for (std::uint64_t k = 0; k <= 200; ++k) {
    const double b = beta_at(s, k, 200);
    CHECK(b >= prev);
    CHECK(b <= 100.0);
    prev = b;
  }
}

TEST_CASE("log_reward is exactly beta times the raw reward") {
  RewardSpec s = make_ring_reward(1.0);
  s.beta_max = 20.0;
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    Tensor x = Tensor::row({2.0 * rng.normal(), 2.0 * rng.normal()});
    const std::uint64_t step = rng.uniform_index(101);
    const double lr = log_reward(s, x, -1, step, 100);
    CHECK(lr == beta_at(s, step, 100) * eval_raw_reward(s, x, -1));
  }
  // beta = 0 -> uniform target
  CHECK(log_reward(s, Tensor::row({5.0, 5.0}), -1, 0, 100) == 0.0);
  // beta=100 with r_raw = 0.5 gives 50
  RewardSpec s2 = make_ring_reward(1.0);
  s2.beta_max = 100.0;
  RewardSpec st = make_table_reward({0.5});
  CHECK(beta_at(s2, 100, 100) * eval_raw_reward_discrete(st, 0) == doctest::Approx(50.0));

  // monotone: bigger raw reward, bigger log reward at positive beta
  RewardSpec ring = make_ring_reward(1.0);
  ring.beta_max = 20.0;
  Tensor near = Tensor::row({1.0, 0.0});
  Tensor far = Tensor::row({3.0, 0.0});
  CHECK(eval_raw_reward(ring, near, -1) > eval_raw_reward(ring, far, -1));
  CHECK(log_reward(ring, near, -1, 100, 100) > log_reward(ring, far, -1, 100, 100));
}

TEST_CASE("reward purity: repeated evaluation is identical") {
  RewardSpec s = make_gmm_reward({{0.3, -0.4}, {1.0, 1.0}}, {1.0, 3.0}, 0.7);
  Tensor x = Tensor::row({0.123456, -0.654321});
  const double a = eval_raw_reward(s, x, -1);
  const double b = eval_raw_reward(s, x, -1);
  CHECK(a == b);
}

TEST_CASE("default oracle table has dynamic range 10 in linear domain") {
  std::vector<double> t = default_oracle_table(16);
  double mn = 1e300, mx = -1e300;
  for (double v : t) {
    mn = std::min(mn, std::exp(v));
    mx = std::max(mx, std::exp(v));
  }
  CHECK(mn == doctest::Approx(1.0).epsilon(0.05));
  CHECK(mx == doctest::Approx(10.0).epsilon(0.05));
}
