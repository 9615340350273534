#include "dag/epoch.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "dag/errors.hpp"

namespace dag {

Algorithm algorithm_from(const std::string& name) {
  if (name == "dag-db") return Algorithm::DagDb;
  if (name == "dag-kl") return Algorithm::DagKl;
  if (name == "ddpo") return Algorithm::Ddpo;
  throw ConfigError("unknown algorithm: " + name);
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::DagDb: return "dag-db";
    case Algorithm::DagKl: return "dag-kl";
    default: return "ddpo";
  }
}

void AlignConfig::validate(std::size_t horizon) const {
  if (clip_eps <= 0.0 || ppo_clip_eps <= 0.0) throw ConfigError("clip epsilon must be > 0");
  if (lr <= 0.0) throw ConfigError("learning rate must be > 0");
  if (rollouts_per_epoch < 1 || opt_steps_per_epoch < 1) {
    throw ConfigError("rollouts/opt steps must be >= 1");
  }
  if ((rollouts_per_epoch * horizon) % opt_steps_per_epoch != 0) {
    throw ConfigError("rollouts_per_epoch * horizon must divide by opt_steps_per_epoch");
  }
}

AlignState init_align_state(Model model, const AlignConfig& cfg, std::uint64_t seed) {
  cfg.validate(model.horizon());
  AlignState st;
  AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  st.opt_theta = OptimizerState::init(model.theta, ocfg);
  st.opt_phi = OptimizerState::init(model.phi, ocfg);
  st.model = std::move(model);
  st.rng = Rng(seed);
  return st;
}

namespace {

struct RunningMean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) { sum += v; ++n; }
  double value() const {
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
  }
};

}  // namespace

EpochMetrics align_epoch(AlignState& st, const AlignConfig& cfg,
                         const RewardSpec& reward, std::uint64_t total_epochs) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate(st.model.horizon());
  Model& model = st.model;
  const std::size_t T = model.horizon();
  const std::size_t n_roll = cfg.rollouts_per_epoch;
  const double beta = beta_at(reward, st.epoch, total_epochs);
  const std::uint64_t snapshot = model.version;

  // Conditions: uniform over the policy's condition set when conditional.
  std::vector<int> conds;
  if (model.kind == ChainKind::Continuous && model.policy_spec.cond_count > 0) {
    conds.resize(n_roll);
    for (auto& c : conds) {
      c = static_cast<int>(st.rng.uniform_index(model.policy_spec.cond_count));
    }
  }
  const std::uint64_t rollout_seed = st.rng.next_u64();
  std::vector<Trajectory> trajs = rollout(model, reward, n_roll, conds, rollout_seed);

  EpochMetrics m;
  m.epoch = st.epoch;
  m.beta = beta;
  m.loss_fl_db = m.loss_dag_kl = m.loss_kl_reg = m.loss_ddpo =
      std::numeric_limits<double>::quiet_NaN();
  {
    double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
    for (const Trajectory& tr : trajs) {
      sum += tr.r_terminal;
      mx = std::max(mx, tr.r_terminal);
    }
    m.reward_mean = sum / static_cast<double>(n_roll);
    m.reward_max = mx;
    double ss = 0.0;
    for (const Trajectory& tr : trajs) {
      const double d = tr.r_terminal - m.reward_mean;
      ss += d * d;
    }
    m.reward_std = std::sqrt(ss / static_cast<double>(n_roll));
  }

  // Flatten and shuffle single transitions; each optimization step consumes
  // one contiguous slice.
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  picks.reserve(n_roll * T);
  for (std::size_t i = 0; i < n_roll; ++i) {
    for (std::size_t t = 1; t <= T; ++t) picks.emplace_back(i, t);
  }
  st.rng.shuffle(picks);
  const std::size_t bsz = picks.size() / cfg.opt_steps_per_epoch;

  RunningMean fl_db, dag_kl, kl_reg, ddpo, gnorm_theta, gnorm_phi;
  const double kl_scale = cfg.kl_scale_final_beta ? reward.beta_max : 1.0;

  for (std::size_t step = 0; step < cfg.opt_steps_per_epoch; ++step) {
    std::span<const std::pair<std::size_t, std::size_t>> slice(picks.data() + step * bsz,
                                                               bsz);
    TransitionBatch batch = make_batch(model, trajs, slice, beta);
    try {
      switch (cfg.algo) {
        case Algorithm::DagDb: {
          ParamSet joint = ParamSet::join({{"policy.", &model.theta}, {"flow.", &model.phi}});
          const std::size_t n_theta = model.theta.size();
          GradResult g = grad(joint, [&](Tape& tape, std::span<const Var> leaves) {
            return fl_db_loss_graph(tape, model, leaves.subspan(0, n_theta),
                                    leaves.subspan(n_theta), batch);
          });
          fl_db.add(g.loss);
          gnorm_theta.add(g.grads.global_l2_norm());
          ParamSet clipped = clip_global_norm(g.grads, cfg.grad_clip_norm);
          ParamSet g_theta = clipped.with_prefix_removed("policy.");
          ParamSet g_phi = clipped.with_prefix_removed("flow.");
          AdamWResult rt = adamw_step(model.theta, g_theta, std::move(st.opt_theta));
          model.theta = std::move(rt.params);
          st.opt_theta = std::move(rt.state);
          model.version += 1;
          AdamWResult rp = adamw_step(model.phi, g_phi, std::move(st.opt_phi));
          model.phi = std::move(rp.params);
          st.opt_phi = std::move(rp.state);
          model.version += 1;
          break;
        }
        case Algorithm::DagKl: {
          // Flow update via FL-DB with theta frozen; the residual values
          // double as the advantage b for the policy update.
          std::vector<double> b;
          {
            Tape tape;
            std::vector<Var> ph = mount_params(tape, model.phi);
            std::vector<Var> th = mount_constants(tape, model.theta);
            Var delta = transition_residual(tape, model, th, ph, batch,
                                            FlowShaping::ForwardLooking);
            Var loss = tape.mean(tape.square(delta));
            tape.backward(loss);
            fl_db.add(tape.val(loss).item());
            b = tape.val(delta).vec();
            ParamSet g_phi;
            for (std::size_t i = 0; i < model.phi.size(); ++i) {
              g_phi.add(model.phi.name(i), tape.grad_of(ph[i]));
            }
            gnorm_phi.add(g_phi.global_l2_norm());
            ParamSet clipped = clip_global_norm(g_phi, cfg.grad_clip_norm);
            AdamWResult rp = adamw_step(model.phi, clipped, std::move(st.opt_phi));
            model.phi = std::move(rp.params);
            st.opt_phi = std::move(rp.state);
            model.version += 1;
          }
          {
            Tape tape;
            std::vector<Var> th = mount_params(tape, model.theta);
            Var policy = dag_kl_policy_loss_graph(tape, model, th, batch, b,
                                                  cfg.clip_eps, kl_scale, snapshot);
            Var reg = kl_regularizer_graph(tape, model, th, batch, cfg.kl_reg_coef);
            Var loss = tape.add(policy, reg);
            tape.backward(loss);
            dag_kl.add(tape.val(policy).item());
            kl_reg.add(tape.val(reg).item());
            ParamSet g_theta;
            for (std::size_t i = 0; i < model.theta.size(); ++i) {
              g_theta.add(model.theta.name(i), tape.grad_of(th[i]));
            }
            gnorm_theta.add(g_theta.global_l2_norm());
            ParamSet clipped = clip_global_norm(g_theta, cfg.grad_clip_norm);
            AdamWResult rt = adamw_step(model.theta, clipped, std::move(st.opt_theta));
            model.theta = std::move(rt.params);
            st.opt_theta = std::move(rt.state);
            model.version += 1;
          }
          break;
        }
        case Algorithm::Ddpo: {
          std::vector<double> adv = ddpo_advantages(batch);
          Tape tape;
          std::vector<Var> th = mount_params(tape, model.theta);
          Var surr = ddpo_loss_graph(tape, model, th, batch, adv, cfg.ppo_clip_eps,
                                     snapshot);
          Var reg = kl_regularizer_graph(tape, model, th, batch, cfg.kl_reg_coef);
          Var loss = tape.add(surr, reg);
          tape.backward(loss);
          ddpo.add(tape.val(surr).item());
          kl_reg.add(tape.val(reg).item());
          ParamSet g_theta;
          for (std::size_t i = 0; i < model.theta.size(); ++i) {
            g_theta.add(model.theta.name(i), tape.grad_of(th[i]));
          }
          gnorm_theta.add(g_theta.global_l2_norm());
          ParamSet clipped = clip_global_norm(g_theta, cfg.grad_clip_norm);
          AdamWResult rt = adamw_step(model.theta, clipped, std::move(st.opt_theta));
          model.theta = std::move(rt.params);
          st.opt_theta = std::move(rt.state);
          model.version += 1;
          break;
        }
      }
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(st.epoch) + " opt step " +
                           std::to_string(step) + " aborted: " + e.what());
    }
    st.global_step += 1;
  }

  st.epoch += 1;
  m.global_step = st.global_step;
  m.loss_fl_db = fl_db.value();
  m.loss_dag_kl = dag_kl.value();
  m.loss_kl_reg = kl_reg.value();
  m.loss_ddpo = ddpo.value();
  m.grad_norm_theta = gnorm_theta.value();
  m.grad_norm_phi = gnorm_phi.value();
  m.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return m;
}

}  // namespace dag
