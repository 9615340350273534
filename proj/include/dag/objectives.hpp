#pragma once

#include <span>
#include <utility>

#include "dag/model.hpp"
#include "dag/rollout.hpp"

namespace dag {

// Flattened single transitions from a set of rollouts, everything constant
// except what the loss graphs rebuild. All rows must come from the same
// parameter snapshot (version).
struct TransitionBatch {
  ChainKind kind = ChainKind::Continuous;
  std::size_t dim = 0;

  // continuous
  Tensor x_t, x_prev;       // [B,d]
  Tensor xhat_parent;       // [B,d] cached xhat(x_t, t) from rollout

  // discrete
  std::vector<std::size_t> s_t, s_prev;

  std::vector<int> ts;      // per-row t in [1..T]
  std::vector<int> cond;    // per-row condition id (-1 when absent)
  std::vector<double> logp_old;     // cached rollout log-probabilities
  std::vector<double> logq;         // forward kernel log q(x_t | x_{t-1})
  std::vector<double> r_fl_parent;  // r_raw at the shaping point of (x_t, t)
  std::vector<double> r_fl_child;   // same for (x_{t-1}, t-1); r_raw(x_0) at t=1
  std::vector<double> r_terminal;   // trajectory terminal r_raw per row
  std::uint64_t version = 0;
  double beta = 0.0;

  std::size_t size() const { return ts.size(); }
};

// picks: (trajectory index, t) pairs.
TransitionBatch make_batch(const Model& model, std::span<const Trajectory> trajs,
                           std::span<const std::pair<std::size_t, std::size_t>> picks,
                           double beta);

// Mounts parameters as untracked tape inputs (values participate, gradients
// do not). Used wherever a network is held fixed inside a graph.
std::vector<Var> mount_constants(Tape& tape, const ParamSet& params);

enum class FlowShaping {
  None,            // log F = log F-tilde; terminal anchor beta * r_raw(x_0)
  ForwardLooking,  // log F = log F-tilde + beta * r_raw(shaping point)
};

// Per-transition residual
//   delta = log F(x_t,t) + log p(x_{t-1}|x_t) - log F(x_{t-1},t-1) - log q(x_t|x_{t-1})
// with F(.,0) structurally anchored to the reward. Returns [B].
Var transition_residual(Tape& tape, const Model& model,
                        std::span<const Var> theta_leaves,
                        std::span<const Var> phi_leaves,
                        const TransitionBatch& batch, FlowShaping shaping);

// mean(delta_FL^2)
Var fl_db_loss_graph(Tape& tape, const Model& model,
                     std::span<const Var> theta_leaves,
                     std::span<const Var> phi_leaves, const TransitionBatch& batch);

// Gradient-free advantage b = delta_FL evaluated at the current parameters.
std::vector<double> advantage_b(const Model& model, const TransitionBatch& batch);

// log p_theta(x_{t-1} | x_t) per row, differentiable in theta.
Var policy_logp_graph(Tape& tape, const Model& model,
                      std::span<const Var> theta_leaves, const TransitionBatch& batch);

// mean(b * clip(p/p_old, 1-eps, 1+eps)) * scale; gradient flows only through
// the ratio numerator. Requires batch.version == snapshot_version.
Var dag_kl_policy_loss_graph(Tape& tape, const Model& model,
                             std::span<const Var> theta_leaves,
                             const TransitionBatch& batch, std::span<const double> b,
                             double clip_eps, double scale,
                             std::uint64_t snapshot_version);

// coef * mean ||mean_theta - mean_theta_old||^2 (continuous; the old mean is
// reconstructed from the cached xhat). Discrete analog: coef * mean of
// (logp_theta - logp_old)^2 on the taken transitions.
Var kl_regularizer_graph(Tape& tape, const Model& model,
                         std::span<const Var> theta_leaves,
                         const TransitionBatch& batch, double coef);

// Whitened advantages beta * r_terminal (per batch; per condition group when
// conditions are present). Throws on batches/groups of size 1.
std::vector<double> ddpo_advantages(const TransitionBatch& batch);

// -mean(min(ratio * A, clip(ratio, 1-eps, 1+eps) * A))
Var ddpo_loss_graph(Tape& tape, const Model& model,
                    std::span<const Var> theta_leaves, const TransitionBatch& batch,
                    std::span<const double> advantages, double ppo_clip_eps,
                    std::uint64_t snapshot_version);

}  // namespace dag
