#pragma once

#include <functional>
#include <vector>

#include "dag/discrete.hpp"
#include "dag/tensor.hpp"

namespace dag {

// Exact dynamic programming on a discrete chain. All flow arithmetic is in
// log-domain (log-sum-exp): reward exponents make linear flows overflow.
struct ExactSolution {
  std::vector<Tensor> log_flow;  // [0..T], each [S]; log_flow[0] = log R
  std::vector<Tensor> policy;    // [1..T], each [S,S]: p*(x_{t-1}=j | x_t=i)
  std::vector<Tensor> log_policy;
  double log_z = 0.0;            // log sum_x R(x)
};

// Forward recursion F(x_t,t) = sum_{x_{t-1}} F(x_{t-1},t-1) q(x_t|x_{t-1})
// from F(.,0) = R, plus the induced optimal reverse policy. log_reward must be
// finite everywhere (R strictly positive). Guarded to S <= 64, T <= 12.
ExactSolution exact_flows(const DiscreteChainSpec& chain,
                          const std::vector<double>& log_reward);

// Exact terminal distribution of a policy: start from p(x_T) and push through
// the reverse-policy matrices down to t = 0.
std::vector<double> terminal_distribution(const DiscreteChainSpec& chain,
                                          const std::vector<Tensor>& policy);

double total_variation(const std::vector<double>& a, const std::vector<double>& b);

// Normalized reward distribution R/Z.
std::vector<double> reward_distribution(const std::vector<double>& log_reward);

// TV between the DP-optimal terminal distribution under the fixed source and
// R/Z: the irreducible floor any trainer on this chain inherits.
double optimal_floor(const DiscreteChainSpec& chain,
                     const std::vector<double>& log_reward);

// Proposition 1 on one enumerable transition: compares (a) the autodiff
// gradient of the enumerated KL(p_theta || F q / F) with (b) the enumerated
// REINFORCE estimator sum_x p(x) b(x) grad log p(x) computed with the
// analytic softmax derivative. Returns the max absolute discrepancy over the
// logit coordinates.
double prop1_check(const Tensor& logits, double log_flow_parent,
                   const Tensor& log_flow_child, const Tensor& log_q);

// Central finite differences of f at x; h_i = step * max(1, |x_i|).
std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double step);

// |a-b| relative to max(|a|, |b|, floor); the floor keeps vanishing-gradient
// coordinates from dividing by ~0.
double rel_err(double a, double b, double floor = 1e-3);

}  // namespace dag
