#include "dag/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dag/errors.hpp"
#include "dag/tape.hpp"

namespace dag {

namespace {

double logsumexp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

ExactSolution exact_flows(const DiscreteChainSpec& chain,
                          const std::vector<double>& log_reward) {
  chain.validate();
  const std::size_t S = chain.n_states, T = chain.horizon;
  if (S > 64 || T > 12) {
    throw ContractError("exact_flows: enumeration guard (S <= 64, T <= 12)");
  }
  if (log_reward.size() != S) throw ContractError("exact_flows: reward size mismatch");
  for (double lr : log_reward) {
    if (!std::isfinite(lr)) {
      throw ContractError("exact_flows: reward must be strictly positive (finite log)");
    }
  }

  ExactSolution sol;
  sol.log_flow.resize(T + 1);
  sol.policy.resize(T + 1);
  sol.log_policy.resize(T + 1);
  sol.log_flow[0] = Tensor::row(log_reward);
  sol.log_z = logsumexp(log_reward);

  std::vector<double> terms(S);
  for (std::size_t t = 1; t <= T; ++t) {
    Tensor lf({S});
    Tensor lp({S, S});
    for (std::size_t i = 0; i < S; ++i) {  // i = x_t
      for (std::size_t j = 0; j < S; ++j) {  // j = x_{t-1}
        terms[j] = sol.log_flow[t - 1][j] + chain.log_q(t, j, i);
      }
      lf[i] = logsumexp(terms);
      for (std::size_t j = 0; j < S; ++j) lp.at(i, j) = terms[j] - lf[i];
    }
    Tensor p({S, S});
    for (std::size_t i = 0; i < S * S; ++i) p[i] = std::exp(lp[i]);
    sol.log_flow[t] = std::move(lf);
    sol.log_policy[t] = std::move(lp);
    sol.policy[t] = std::move(p);
  }
  return sol;
}

std::vector<double> terminal_distribution(const DiscreteChainSpec& chain,
                                          const std::vector<Tensor>& policy) {
  const std::size_t S = chain.n_states, T = chain.horizon;
  if (policy.size() != T + 1) throw ContractError("terminal_distribution: policy count");
  std::vector<double> mu = chain.source;
  std::vector<double> next(S);
  for (std::size_t t = T; t >= 1; --t) {
    const Tensor& p = policy[t];
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < S; ++i) {
      if (mu[i] == 0.0) continue;
      for (std::size_t j = 0; j < S; ++j) next[j] += mu[i] * p.at(i, j);
    }
    mu.swap(next);
  }
  return mu;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

std::vector<double> reward_distribution(const std::vector<double>& log_reward) {
  const double lz = logsumexp(log_reward);
  std::vector<double> out(log_reward.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_reward[i] - lz);
  return out;
}

double optimal_floor(const DiscreteChainSpec& chain,
                     const std::vector<double>& log_reward) {
  ExactSolution sol = exact_flows(chain, log_reward);
  std::vector<double> pt = terminal_distribution(chain, sol.policy);
  return total_variation(pt, reward_distribution(log_reward));
}

double prop1_check(const Tensor& logits, double log_flow_parent,
                   const Tensor& log_flow_child, const Tensor& log_q) {
  const std::size_t S = logits.numel();
  if (log_flow_child.numel() != S || log_q.numel() != S) {
    throw ContractError("prop1_check: size mismatch");
  }
  // c_i = log F(x_t) - log F(x_{t-1}=i) - log q(x_t | i); b_i = log p_i + c_i
  Tensor c({S});
  for (std::size_t i = 0; i < S; ++i) {
    c[i] = log_flow_parent - log_flow_child[i] - log_q[i];
  }

  // (a) autodiff through the enumerated KL value sum_i p_i (log p_i + c_i).
  Tape tape;
  Tensor l2({1, S});
  for (std::size_t i = 0; i < S; ++i) l2.at(0, i) = logits[i];
  Var z = tape.input(l2, true, "logits");
  Var logp = tape.sub_colvec(z, tape.logsumexp_rows(z));  // [1,S]
  Var p = tape.exp(logp);
  Tensor c2({1, S});
  for (std::size_t i = 0; i < S; ++i) c2.at(0, i) = c[i];
  Var kl_terms = tape.mul(p, tape.add(logp, tape.constant(c2)));
  Var kl = tape.sum(kl_terms);
  tape.backward(kl);
  Tensor grad_kl = tape.grad_of(z);

  // (b) REINFORCE estimator with the analytic softmax score:
  // sum_i p_i b_i (delta_ij - p_j) = p_j b_j - p_j E[b].
  std::vector<double> pv(S), bv(S);
  {
    double mx = logits[0];
    for (std::size_t i = 1; i < S; ++i) mx = std::max(mx, logits[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < S; ++i) s += std::exp(logits[i] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t i = 0; i < S; ++i) {
      const double lp = logits[i] - lse;
      pv[i] = std::exp(lp);
      bv[i] = lp + c[i];
    }
  }
  double eb = 0.0;
  for (std::size_t i = 0; i < S; ++i) eb += pv[i] * bv[i];
  double worst = 0.0;
  for (std::size_t j = 0; j < S; ++j) {
    const double estimator = pv[j] * bv[j] - pv[j] * eb;
    worst = std::max(worst, std::abs(grad_kl.at(0, j) - estimator));
  }
  return worst;
}

std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace dag
