#include <algorithm>
#include "dag/discrete.hpp"

#include <cmath>

#include "dag/errors.hpp"

namespace dag {

void DiscreteChainSpec::validate() const {
  if (n_states < 2) throw ContractError("discrete chain: need >= 2 states");
  if (horizon < 1) throw ContractError("discrete chain: need horizon >= 1");
  if (q.size() != horizon + 1) throw ContractError("discrete chain: kernel count mismatch");
  for (std::size_t t = 1; t <= horizon; ++t) {
    const Tensor& m = q[t];
    if (m.ndim() != 2 || m.rows() != n_states || m.cols() != n_states) {
      throw ContractError("discrete chain: kernel shape mismatch at t=" + std::to_string(t));
    }
    for (std::size_t i = 0; i < n_states; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n_states; ++j) s += m.at(i, j);
      if (std::abs(s - 1.0) > 1e-12) {
        throw ContractError("discrete chain: kernel row not stochastic at t=" +
                            std::to_string(t));
      }
    }
  }
  double s = 0.0;
  for (double p : source) s += p;
  if (source.size() != n_states || std::abs(s - 1.0) > 1e-12) {
    throw ContractError("discrete chain: source distribution invalid");
  }
}

double DiscreteChainSpec::log_q(std::size_t t, std::size_t prev, std::size_t cur) const {
  if (t < 1 || t > horizon) throw ContractError("log_q: t out of range");
  if (prev >= n_states || cur >= n_states) throw ContractError("log_q: state out of range");
  return std::log(q[t].at(prev, cur));
}

DiscreteChainSpec make_lazy_uniform_chain(std::size_t n_states, std::size_t horizon,
                                          double stay) {
  DiscreteChainSpec c;
  c.n_states = n_states;
  c.horizon = horizon;
  c.q.resize(horizon + 1);
  const double base = (1.0 - stay) / static_cast<double>(n_states);
  for (std::size_t t = 1; t <= horizon; ++t) {
    Tensor m({n_states, n_states});
    for (std::size_t i = 0; i < n_states; ++i) {
      for (std::size_t j = 0; j < n_states; ++j) {
        m.at(i, j) = base + (i == j ? stay : 0.0);
      }
      // Make each row sum exactly 1 to keep validate() honest about fp drift.
      double s = 0.0;
      for (std::size_t j = 0; j < n_states; ++j) s += m.at(i, j);
      for (std::size_t j = 0; j < n_states; ++j) m.at(i, j) /= s;
    }
    c.q[t] = std::move(m);
  }
  c.source.assign(n_states, 1.0 / static_cast<double>(n_states));
  c.validate();
  return c;
}

ParamSet discrete_policy_init(const DiscreteChainSpec& chain) {
  ParamSet p;
  p.add("logits", Tensor::zeros({chain.horizon * chain.n_states, chain.n_states}));
  return p;
}

ParamSet discrete_flow_init(const DiscreteChainSpec& chain) {
  ParamSet p;
  p.add("logflow", Tensor::zeros({chain.horizon * chain.n_states, 1}));
  return p;
}

namespace {
double row_logsumexp(const double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
  return mx + std::log(s);
}
}  // namespace

double discrete_reverse_logpmf(const DiscreteChainSpec& chain, const ParamSet& policy,
                               std::size_t x_t, std::size_t x_prev, std::size_t t) {
  if (t < 1 || t > chain.horizon) throw ContractError("logpmf: t out of range");
  if (x_t >= chain.n_states || x_prev >= chain.n_states) {
    throw ContractError("logpmf: state out of range");
  }
  const Tensor& logits = policy.get("logits");
  const double* row = logits.data() + discrete_row(chain, t, x_t) * chain.n_states;
  return row[x_prev] - row_logsumexp(row, chain.n_states);
}

std::vector<Tensor> discrete_policy_tables(const DiscreteChainSpec& chain,
                                           const ParamSet& policy) {
  const Tensor& logits = policy.get("logits");
  std::vector<Tensor> out(chain.horizon + 1);
  for (std::size_t t = 1; t <= chain.horizon; ++t) {
    Tensor m({chain.n_states, chain.n_states});
    for (std::size_t i = 0; i < chain.n_states; ++i) {
      const double* row = logits.data() + discrete_row(chain, t, i) * chain.n_states;
      const double lse = row_logsumexp(row, chain.n_states);
      for (std::size_t j = 0; j < chain.n_states; ++j) {
        m.at(i, j) = std::exp(row[j] - lse);
      }
    }
    out[t] = std::move(m);
  }
  return out;
}

Var discrete_logp_graph(Tape& tape, const DiscreteChainSpec& chain, Var logits_leaf,
                        std::span<const std::size_t> s_t,
                        std::span<const std::size_t> s_prev,
                        std::span<const int> ts) {
  const std::size_t b = s_t.size();
  std::vector<std::size_t> rows(b), cols(b);
  for (std::size_t i = 0; i < b; ++i) {
    rows[i] = discrete_row(chain, static_cast<std::size_t>(ts[i]), s_t[i]);
    cols[i] = s_prev[i];
  }
  Var picked_rows = tape.gather_rows(logits_leaf, std::move(rows));  // [B,S]
  Var lse = tape.logsumexp_rows(picked_rows);                        // [B]
  Var entry = tape.pick_cols(picked_rows, std::move(cols));          // [B]
  return tape.sub(entry, lse);
}

Var discrete_flow_graph(Tape& tape, const DiscreteChainSpec& chain, Var flow_leaf,
                        std::span<const std::size_t> states, std::span<const int> ts) {
  const std::size_t b = states.size();
  std::vector<std::size_t> rows(b);
  for (std::size_t i = 0; i < b; ++i) {
    // t == 0 has no learnable entry; point at row 0, caller multiplies by the
    // structural mask so neither value nor gradient leaks through.
    const std::size_t t = ts[i] == 0 ? 1 : static_cast<std::size_t>(ts[i]);
    rows[i] = discrete_row(chain, t, states[i]);
  }
  Var picked = tape.gather_rows(flow_leaf, std::move(rows));  // [B,1]
  return tape.sum_rows(picked);                               // [B]
}

}  // namespace dag
