#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dag/nn.hpp"
#include "dag/tensor.hpp"

namespace dag {

// Small discrete chain: alphabet of S states, T noising kernels, a fixed
// source distribution over x_T. Exists so every training claim can be checked
// against exact dynamic programming.
struct DiscreteChainSpec {
  std::size_t n_states = 16;
  std::size_t horizon = 5;
  // q[t](i, j) = q(x_t = j | x_{t-1} = i), rows sum to 1. Index 0 unused.
  std::vector<Tensor> q;
  std::vector<double> source;  // p(x_T)

  void validate() const;
  double log_q(std::size_t t, std::size_t prev, std::size_t cur) const;
};

// Default chain: stay with probability `stay`, otherwise resample uniformly
// over all states (doubly stochastic); uniform source.
DiscreteChainSpec make_lazy_uniform_chain(std::size_t n_states, std::size_t horizon,
                                          double stay = 0.3);

// Learnable tables. The policy is one [T*S, S] logits tensor, row
// (t-1)*S + x_t holding logits over x_{t-1}; the flow is one [T*S, 1] tensor
// of log F-tilde values (t = 0 is structurally zero and has no entry).
ParamSet discrete_policy_init(const DiscreteChainSpec& chain);
ParamSet discrete_flow_init(const DiscreteChainSpec& chain);

inline std::size_t discrete_row(const DiscreteChainSpec& c, std::size_t t,
                                std::size_t state) {
  return (t - 1) * c.n_states + state;
}

// log p(x_{t-1} | x_t) from the logits table (row-normalized softmax).
double discrete_reverse_logpmf(const DiscreteChainSpec& chain, const ParamSet& policy,
                               std::size_t x_t, std::size_t x_prev, std::size_t t);

// Full probability tables softmax(logits): [1..T] of [S,S] rows over x_t.
std::vector<Tensor> discrete_policy_tables(const DiscreteChainSpec& chain,
                                           const ParamSet& policy);

// Tape path: rows of log-probabilities picked per transition.
// Returns [B] log p(x_prev | x_t, t).
Var discrete_logp_graph(Tape& tape, const DiscreteChainSpec& chain, Var logits_leaf,
                        std::span<const std::size_t> s_t,
                        std::span<const std::size_t> s_prev,
                        std::span<const int> ts);

// Tape path for log F-tilde at (state, t); caller masks t == 0 rows itself.
Var discrete_flow_graph(Tape& tape, const DiscreteChainSpec& chain, Var flow_leaf,
                        std::span<const std::size_t> states, std::span<const int> ts);

}  // namespace dag
