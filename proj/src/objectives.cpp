#include <algorithm>
#include "dag/objectives.hpp"

#include <cmath>

#include "dag/errors.hpp"
#include "dag/gaussian.hpp"

namespace dag {

TransitionBatch make_batch(const Model& model, std::span<const Trajectory> trajs,
                           std::span<const std::pair<std::size_t, std::size_t>> picks,
                           double beta) {
  if (picks.empty()) throw ContractError("make_batch: empty pick list");
  TransitionBatch b;
  b.kind = model.kind;
  b.beta = beta;
  b.version = trajs.empty() ? model.version : trajs[0].version;
  const std::size_t n = picks.size();
  b.ts.resize(n);
  b.cond.resize(n);
  b.logp_old.resize(n);
  b.logq.resize(n);
  b.r_fl_parent.resize(n);
  b.r_fl_child.resize(n);
  b.r_terminal.resize(n);

  if (model.kind == ChainKind::Continuous) {
    b.dim = model.policy_spec.data_dim;
    b.x_t = Tensor({n, b.dim});
    b.x_prev = Tensor({n, b.dim});
    b.xhat_parent = Tensor({n, b.dim});
  } else {
    b.s_t.resize(n);
    b.s_prev.resize(n);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto [ti, t] = picks[i];
    const Trajectory& tr = trajs[ti];
    if (tr.version != b.version) {
      throw StaleBatchError("make_batch: trajectories from mixed parameter snapshots");
    }
    if (t < 1 || t > model.horizon()) throw ContractError("make_batch: t out of range");
    b.ts[i] = static_cast<int>(t);
    b.cond[i] = tr.cond;
    b.logp_old[i] = tr.logp[t];
    b.r_fl_parent[i] = tr.r_fl[t];
    b.r_fl_child[i] = tr.r_fl[t - 1];
    b.r_terminal[i] = tr.r_terminal;
    if (model.kind == ChainKind::Continuous) {
      for (std::size_t j = 0; j < b.dim; ++j) {
        b.x_t.at(i, j) = tr.states[t][j];
        b.x_prev.at(i, j) = tr.states[t - 1][j];
        b.xhat_parent.at(i, j) = tr.xhat[t][j];
      }
      b.logq[i] = q_transition_logpdf(model.sched, tr.states[t], tr.states[t - 1], t);
    } else {
      b.s_t[i] = tr.istates[t];
      b.s_prev[i] = tr.istates[t - 1];
      b.logq[i] = model.chain.log_q(t, tr.istates[t - 1], tr.istates[t]);
    }
  }
  return b;
}

std::vector<Var> mount_constants(Tape& tape, const ParamSet& params) {
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    leaves.push_back(tape.input(params.value(i), false, params.name(i)));
  }
  return leaves;
}

namespace {

// log F-tilde at (parent or child) as a [B] graph node, already multiplied by
// the structural t==0 mask on the child side.
Var flow_term(Tape& tape, const Model& model, std::span<const Var> phi_leaves,
              const TransitionBatch& batch, bool child) {
  const std::size_t n = batch.size();
  std::vector<int> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = batch.ts[i] - (child ? 1 : 0);

  Var raw{};
  if (model.kind == ChainKind::Continuous) {
    Var x = tape.constant(child ? batch.x_prev : batch.x_t);
    std::span<const int> cspan = model.flow_spec.cond_count > 0
                                     ? std::span<const int>(batch.cond)
                                     : std::span<const int>();
    // t == 0 rows are evaluated (keeps the batch rectangular) and masked out.
    std::vector<int> ts_eval = ts;
    if (child) {
      for (auto& t : ts_eval) t = std::max(t, 0);
    }
    Var out = net_apply(tape, model.flow_spec, phi_leaves, x, ts_eval, cspan);
    raw = tape.sum_rows(out);  // [B,1] -> [B]
  } else {
    std::span<const std::size_t> states = child ? batch.s_prev : batch.s_t;
    raw = discrete_flow_graph(tape, model.chain, phi_leaves[0], states, ts);
  }
  if (!child) return raw;
  Tensor mask({n});
  for (std::size_t i = 0; i < n; ++i) mask[i] = ts[i] >= 1 ? 1.0 : 0.0;
  return tape.mul(raw, tape.constant(mask));
}

}  // namespace

Var policy_logp_graph(Tape& tape, const Model& model,
                      std::span<const Var> theta_leaves, const TransitionBatch& batch) {
  if (model.kind == ChainKind::Discrete) {
    return discrete_logp_graph(tape, model.chain, theta_leaves[0], batch.s_t,
                               batch.s_prev, batch.ts);
  }
  Var x = tape.constant(batch.x_t);
  std::span<const int> cspan = model.policy_spec.cond_count > 0
                                   ? std::span<const int>(batch.cond)
                                   : std::span<const int>();
  Var xhat = net_apply(tape, model.policy_spec, theta_leaves, x, batch.ts, cspan);
  BatchCoef bc = batch_coef(model.sched, batch.ts, batch.dim);
  Var mean = posterior_mean_graph(tape, bc, x, xhat);
  return reverse_logpdf_graph(tape, bc, mean, tape.constant(batch.x_prev));
}

Var transition_residual(Tape& tape, const Model& model,
                        std::span<const Var> theta_leaves,
                        std::span<const Var> phi_leaves,
                        const TransitionBatch& batch, FlowShaping shaping) {
  const std::size_t n = batch.size();
  Var flow_parent = flow_term(tape, model, phi_leaves, batch, /*child=*/false);
  Var flow_child = flow_term(tape, model, phi_leaves, batch, /*child=*/true);
  Var logp = policy_logp_graph(tape, model, theta_leaves, batch);

  // Constant part: shaping rewards enter gradient-free (black-box contract),
  // the terminal anchor is exactly beta * r_raw(x_0), and log q is constant.
  Tensor cvec({n});
  for (std::size_t i = 0; i < n; ++i) {
    const bool terminal_child = batch.ts[i] == 1;
    double parent_shape = 0.0, child_shape = 0.0;
    if (shaping == FlowShaping::ForwardLooking) {
      parent_shape = batch.beta * batch.r_fl_parent[i];
      child_shape = batch.beta * batch.r_fl_child[i];
    } else if (terminal_child) {
      child_shape = batch.beta * batch.r_fl_child[i];  // r_fl[0] == r_raw(x_0)
    }
    cvec[i] = parent_shape - child_shape - batch.logq[i];
  }
  Var acc = tape.add(flow_parent, logp);
  acc = tape.sub(acc, flow_child);
  return tape.add(acc, tape.constant(cvec));
}

Var fl_db_loss_graph(Tape& tape, const Model& model,
                     std::span<const Var> theta_leaves,
                     std::span<const Var> phi_leaves, const TransitionBatch& batch) {
  Var delta = transition_residual(tape, model, theta_leaves, phi_leaves, batch,
                                  FlowShaping::ForwardLooking);
  return tape.mean(tape.square(delta));
}

std::vector<double> advantage_b(const Model& model, const TransitionBatch& batch) {
  Tape tape;
  std::vector<Var> th = mount_constants(tape, model.theta);
  std::vector<Var> ph = mount_constants(tape, model.phi);
  Var delta = transition_residual(tape, model, th, ph, batch,
                                  FlowShaping::ForwardLooking);
  return tape.val(delta).vec();
}

Var dag_kl_policy_loss_graph(Tape& tape, const Model& model,
                             std::span<const Var> theta_leaves,
                             const TransitionBatch& batch, std::span<const double> b,
                             double clip_eps, double scale,
                             std::uint64_t snapshot_version) {
  if (clip_eps <= 0.0) throw ContractError("dag-kl: clip epsilon must be > 0");
  if (batch.version != snapshot_version) {
    throw StaleBatchError("dag-kl: batch snapshot " + std::to_string(batch.version) +
                          " != rollout snapshot " + std::to_string(snapshot_version));
  }
  if (b.size() != batch.size()) throw ContractError("dag-kl: advantage size mismatch");
  Var logp = policy_logp_graph(tape, model, theta_leaves, batch);
  Var ratio = tape.exp(tape.sub(logp, tape.constant(Tensor::row(batch.logp_old))));
  Var clipped = tape.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  Tensor bt({batch.size()});
  for (std::size_t i = 0; i < b.size(); ++i) bt[i] = b[i];
  Var weighted = tape.mul(tape.constant(bt), clipped);
  return tape.mul_scalar(tape.mean(weighted), scale);
}

Var kl_regularizer_graph(Tape& tape, const Model& model,
                         std::span<const Var> theta_leaves,
                         const TransitionBatch& batch, double coef) {
  if (model.kind == ChainKind::Continuous) {
    Var x = tape.constant(batch.x_t);
    std::span<const int> cspan = model.policy_spec.cond_count > 0
                                     ? std::span<const int>(batch.cond)
                                     : std::span<const int>();
    Var xhat = net_apply(tape, model.policy_spec, theta_leaves, x, batch.ts, cspan);
    BatchCoef bc = batch_coef(model.sched, batch.ts, batch.dim);
    Var mean_new = posterior_mean_graph(tape, bc, x, xhat);
    Tensor mean_old = posterior_mean(model.sched, batch.x_t, batch.xhat_parent, batch.ts);
    Var diff = tape.sub(mean_new, tape.constant(mean_old));
    return tape.mul_scalar(tape.mean(tape.sum_rows(tape.square(diff))), coef);
  }
  Var logp = policy_logp_graph(tape, model, theta_leaves, batch);
  Var diff = tape.sub(logp, tape.constant(Tensor::row(batch.logp_old)));
  return tape.mul_scalar(tape.mean(tape.square(diff)), coef);
}

std::vector<double> ddpo_advantages(const TransitionBatch& batch) {
  const std::size_t n = batch.size();
  if (n < 2) throw ContractError("ddpo: advantage whitening needs batch size >= 2");
  // Group rows by condition id (single group when unconditional).
  std::vector<double> adv(n);
  std::vector<int> group_of(n);
  std::vector<int> groups;
  for (std::size_t i = 0; i < n; ++i) {
    int g = -1;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      if (groups[k] == batch.cond[i]) {
        g = static_cast<int>(k);
        break;
      }
    }
    if (g < 0) {
      g = static_cast<int>(groups.size());
      groups.push_back(batch.cond[i]);
    }
    group_of[i] = g;
  }
  for (std::size_t k = 0; k < groups.size(); ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (group_of[i] == static_cast<int>(k)) idx.push_back(i);
    }
    if (idx.size() < 2) {
      throw ContractError("ddpo: condition group of size 1 (std undefined)");
    }
    double mean = 0.0;
    for (std::size_t i : idx) mean += batch.beta * batch.r_terminal[i];
    mean /= static_cast<double>(idx.size());
    double var = 0.0;
    for (std::size_t i : idx) {
      const double d = batch.beta * batch.r_terminal[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(idx.size());
    const double denom = std::sqrt(var) + 1e-8;
    for (std::size_t i : idx) {
      adv[i] = (batch.beta * batch.r_terminal[i] - mean) / denom;
    }
  }
  return adv;
}

Var ddpo_loss_graph(Tape& tape, const Model& model,
                    std::span<const Var> theta_leaves, const TransitionBatch& batch,
                    std::span<const double> advantages, double ppo_clip_eps,
                    std::uint64_t snapshot_version) {
  if (ppo_clip_eps <= 0.0) throw ContractError("ddpo: clip epsilon must be > 0");
  if (batch.version != snapshot_version) {
    throw StaleBatchError("ddpo: batch snapshot " + std::to_string(batch.version) +
                          " != rollout snapshot " + std::to_string(snapshot_version));
  }
  if (advantages.size() != batch.size()) throw ContractError("ddpo: advantage size mismatch");
  Var logp = policy_logp_graph(tape, model, theta_leaves, batch);
  Var ratio = tape.exp(tape.sub(logp, tape.constant(Tensor::row(batch.logp_old))));
  Var clipped = tape.clamp(ratio, 1.0 - ppo_clip_eps, 1.0 + ppo_clip_eps);
  Tensor at({batch.size()});
  for (std::size_t i = 0; i < advantages.size(); ++i) at[i] = advantages[i];
  Var adv = tape.constant(at);
  Var surr = tape.min_elem(tape.mul(ratio, adv), tape.mul(clipped, adv));
  return tape.mul_scalar(tape.mean(surr), -1.0);
}

}  // namespace dag
