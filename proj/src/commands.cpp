#include "dag/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dag/checkpoint.hpp"
#include "dag/datasets.hpp"
#include "dag/errors.hpp"
#include "dag/evals.hpp"
#include "dag/oracle.hpp"
#include "dag/pretrain.hpp"
#include "dag/strfmt.hpp"
#include "dag/svg.hpp"

namespace dag {

namespace fs = std::filesystem;

namespace {

double now_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void dump_samples(const std::string& path, const Model& model,
                  const std::vector<Trajectory>& trajs) {
  std::ofstream out(path);
  for (const Trajectory& tr : trajs) {
    if (model.kind == ChainKind::Continuous) {
      out << format_double(tr.states[0][0]) << "," << format_double(tr.states[0][1]);
      if (tr.cond >= 0) out << "," << tr.cond;
      out << "\n";
    } else {
      out << tr.istates[0] << "\n";
    }
  }
}

EvalSettings eval_settings(const RunConfig& cfg, std::uint64_t salt) {
  EvalSettings s;
  s.n_samples = cfg.run.eval_samples;
  s.hist_bins = cfg.run.hist_bins;
  s.hist_range = cfg.run.hist_range;
  s.seed = cfg.run.seed * 1000003ULL + salt + 0x5151ULL;
  return s;
}

}  // namespace

int cmd_pretrain(const RunConfig& cfg) {
  if (cfg.task.kind != "continuous") {
    throw ConfigError("pretrain: task.kind must be continuous");
  }
  if (cfg.task.dataset.empty()) throw ConfigError("pretrain: task.dataset is required");
  const auto t0 = std::chrono::steady_clock::now();
  Dataset data = load_dataset(cfg.task.dataset, cfg.task.dim);
  if (cfg.task.conditions > 0 && data.conds.empty()) {
    throw ConfigError("pretrain: conditional task needs a condition column");
  }

  Model model = build_model(cfg, cfg.run.seed);
  AdamWConfig ocfg;
  ocfg.lr = cfg.algorithm.pretrain_lr;
  OptimizerState opt = OptimizerState::init(model.theta, ocfg);
  Rng rng(cfg.run.seed ^ 0xda7a5e7ULL);

  fs::create_directories(cfg.run.out);
  MetricsWriter metrics(cfg.run.out + "/pretrain_metrics.jsonl", /*append=*/false);

  const std::size_t bsz = std::min<std::size_t>(cfg.algorithm.pretrain_batch, data.x.rows());
  double loss = 0.0;
  for (std::size_t step = 0; step < cfg.algorithm.pretrain_steps; ++step) {
    Tensor batch({bsz, cfg.task.dim});
    std::vector<int> conds(cfg.task.conditions > 0 ? bsz : 0);
    for (std::size_t i = 0; i < bsz; ++i) {
      const std::size_t row = rng.uniform_index(data.x.rows());
      for (std::size_t j = 0; j < cfg.task.dim; ++j) batch.at(i, j) = data.x.at(row, j);
      if (!conds.empty()) conds[i] = data.conds[row];
    }
    loss = denoising_pretrain_step(model, opt, batch, conds, rng);
    if (step % 10 == 0 || step + 1 == cfg.algorithm.pretrain_steps) {
      metrics.write(pretrain_record(step, loss, now_since(t0)));
    }
  }

  Checkpoint ckpt;
  ckpt.config_hash = cfg.config_hash();
  ckpt.task_hash = cfg.task_hash();
  ckpt.stage = RunStage::Pretrain;
  ckpt.state.model = std::move(model);
  ckpt.state.opt_theta = std::move(opt);
  ckpt.state.opt_phi = OptimizerState::init(ckpt.state.model.phi, ocfg);
  ckpt.state.global_step = cfg.algorithm.pretrain_steps;
  ckpt.state.rng = rng;
  save_checkpoint(cfg.run.out + "/pretrain.bin", ckpt);
  std::cout << "pretrain: " << cfg.algorithm.pretrain_steps
            << " steps, final loss " << format_double(loss) << ", checkpoint "
            << cfg.run.out << "/pretrain.bin\n";
  return 0;
}

int cmd_align(const RunConfig& cfg, const std::string& resume_path) {
  const AlignConfig acfg = build_align_config(cfg);
  const RewardSpec reward = build_reward(cfg);
  Model structure = build_model(cfg, cfg.run.seed);

  fs::create_directories(cfg.run.out);
  AlignState state;
  bool resumed = false;
  if (!resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_path, structure);
    if (ckpt.stage != RunStage::Align) {
      throw ContractError("resume: checkpoint is not an align checkpoint");
    }
    if (ckpt.config_hash != cfg.semantic_hash()) {
      throw ContractError("resume: config does not match the checkpointed run");
    }
    state = std::move(ckpt.state);
    resumed = true;
  } else {
    state = init_align_state(std::move(structure), acfg, cfg.run.seed);
    if (!cfg.algorithm.init_checkpoint.empty()) {
      Model fresh = build_model(cfg, cfg.run.seed);
      Checkpoint init = load_checkpoint(cfg.algorithm.init_checkpoint, fresh);
      if (init.task_hash != cfg.task_hash()) {
        throw ContractError("init_checkpoint task does not match this config");
      }
      state.model.theta = init.state.model.theta;
      state.model.phi = init.state.model.phi;
    }
  }

  MetricsWriter metrics(cfg.run.out + "/metrics.jsonl", /*append=*/resumed);
  const std::string algo = algorithm_name(acfg.algo);
  const std::string task = cfg.task_label();

  while (state.epoch < acfg.epochs) {
    EpochMetrics m = align_epoch(state, acfg, reward, acfg.epochs);
    std::optional<EvalMetrics> ev;
    const bool eval_now = cfg.run.eval_every > 0 &&
                          ((state.epoch % cfg.run.eval_every == 0) ||
                           state.epoch == acfg.epochs);
    if (eval_now) {
      ev = evaluate_model(state.model, reward, eval_settings(cfg, state.epoch));
      std::vector<Trajectory> sample = rollout(
          state.model, reward, std::min<std::size_t>(512, cfg.run.eval_samples), {},
          cfg.run.seed * 1000003ULL + state.epoch);
      char name[64];
      std::snprintf(name, sizeof(name), "/samples_epoch%04llu.txt",
                    static_cast<unsigned long long>(state.epoch));
      dump_samples(cfg.run.out + name, state.model, sample);
    }
    metrics.write(epoch_record(m, algo, task, acfg.rollouts_per_epoch, ev));

    Checkpoint ckpt;
    ckpt.config_hash = cfg.semantic_hash();
    ckpt.task_hash = cfg.task_hash();
    ckpt.stage = RunStage::Align;
    ckpt.state = state;  // copies the model and optimizer states
    save_checkpoint(cfg.run.out + "/checkpoint.bin", ckpt);
    if (eval_now) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_epoch%04llu.bin",
                    static_cast<unsigned long long>(state.epoch));
      save_checkpoint(cfg.run.out + name, ckpt);
    }
  }
  std::cout << "align(" << algo << "): " << acfg.epochs << " epochs, metrics "
            << metrics.path() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             long long n_samples_override) {
  Model structure = build_model(cfg, cfg.run.seed);
  Checkpoint ckpt = load_checkpoint(checkpoint_path, structure);
  if (ckpt.task_hash != cfg.task_hash()) {
    throw ContractError("eval: checkpoint task does not match this config");
  }
  EvalSettings settings = eval_settings(cfg, 0xe7a1);
  if (n_samples_override >= 0) {
    settings.n_samples = static_cast<std::size_t>(n_samples_override);
  }
  const RewardSpec reward = build_reward(cfg);
  EvalMetrics em = evaluate_model(ckpt.state.model, reward, settings);

  nlohmann::ordered_json j;
  j["checkpoint"] = checkpoint_path;
  j["n_samples"] = settings.n_samples;
  j["reward_mean"] = em.reward_mean;
  j["reward_max"] = em.reward_max;
  j["reward_std"] = em.reward_std;
  if (em.tv_opt) j["tv_opt"] = *em.tv_opt;
  if (em.tv_rz) j["tv_rz"] = *em.tv_rz;
  if (em.kl_opt) j["kl_opt"] = *em.kl_opt;
  if (em.hist_kl) j["hist_kl"] = *em.hist_kl;
  std::cout << j.dump() << "\n";

  fs::create_directories(cfg.run.out);
  std::ofstream report(cfg.run.out + "/eval_report.json");
  report << j.dump(2) << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& metrics_files, const std::string& out_dir) {
  if (metrics_files.empty()) throw ContractError("compare: need at least one metrics file");
  fs::create_directories(out_dir);

  std::vector<Series> series;
  std::vector<std::string> warnings;
  std::vector<std::string> tasks;
  std::ostringstream csv;
  csv << "file,algo,task,epoch,step,trajectories,reward_mean,reward_max,reward_std,beta\n";
  std::size_t total_rows = 0;

  for (const std::string& file : metrics_files) {
    std::vector<nlohmann::ordered_json> records = read_metrics(file);
    Series s;
    s.label = fs::path(file).stem().string();
    for (const auto& r : records) {
      ++total_rows;
      const std::string algo = r.value("algo", "");
      const std::string task = r.value("task", "");
      if (!task.empty() &&
          std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
        tasks.push_back(task);
      }
      if (!algo.empty() && s.label.find(algo) == std::string::npos) {
        s.label = algo + ":" + s.label;
      }
      csv << fs::path(file).filename().string() << "," << algo << "," << task << ",";
      auto cell = [&](const char* key) {
        if (r.contains(key) && r[key].is_number()) {
          csv << format_double(r[key].get<double>());
        }
        csv << ",";
      };
      auto cell_int = [&](const char* key) {
        if (r.contains(key) && r[key].is_number_unsigned()) {
          csv << r[key].get<std::uint64_t>();
        }
        csv << ",";
      };
      cell_int("epoch");
      cell_int("step");
      cell_int("trajectories");
      cell("reward_mean");
      cell("reward_max");
      cell("reward_std");
      if (r.contains("beta") && r["beta"].is_number()) {
        csv << format_double(r["beta"].get<double>());
      }
      csv << "\n";
      if (r.contains("trajectories") && r.contains("reward_mean") &&
          r["reward_mean"].is_number()) {
        s.points.emplace_back(r["trajectories"].get<double>(),
                              r["reward_mean"].get<double>());
      }
    }
    if (!s.points.empty()) series.push_back(std::move(s));
  }
  if (tasks.size() > 1) {
    std::string w = "mixed tasks:";
    for (const std::string& t : tasks) w += " " + t;
    warnings.push_back(w);
    std::cerr << "compare warning: " << w << "\n";
  }
  if (series.empty()) throw ContractError("compare: no reward series found");

  const std::string svg = render_line_chart(
      "mean raw reward vs trajectories", "trajectories consumed", "mean raw reward",
      series, warnings);
  std::ofstream(out_dir + "/compare.svg") << svg;
  std::ofstream(out_dir + "/compare.csv") << csv.str();
  std::cout << "compare: " << total_rows << " records -> " << out_dir
            << "/compare.{svg,csv}\n";
  return 0;
}

namespace {

struct CheckLine {
  std::string name;
  double value;
  double threshold;
  bool pass;
};

void emit(std::vector<CheckLine>& all, const std::string& name, double value,
          double threshold) {
  const bool pass = value <= threshold;
  all.push_back({name, value, threshold, pass});
  nlohmann::ordered_json j;
  j["check"] = name;
  j["status"] = pass ? "pass" : "fail";
  j["value"] = value;
  j["threshold"] = threshold;
  std::cout << j.dump() << "\n";
}

}  // namespace

int cmd_oracle_check(const RunConfig& cfg, double inject_flow_perturbation) {
  std::vector<CheckLine> checks;

  // Proposition 1 on 100 random enumerable instances.
  {
    Rng rng(cfg.run.seed ^ 0x9817ULL);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t S = 2 + rng.uniform_index(7);
      Tensor logits({S}), lfc({S}), lq({S});
      for (std::size_t i = 0; i < S; ++i) {
        logits[i] = rng.normal();
        lfc[i] = rng.normal();
        lq[i] = rng.normal() - 1.0;
      }
      worst = std::max(worst, prop1_check(logits, rng.normal(), lfc, lq));
    }
    emit(checks, "prop1_kl_vs_reinforce", worst, 1e-10);
  }

  // DB identity on the DP-exact solution of the configured chain.
  {
    const std::size_t S = cfg.task.states;
    const std::size_t T = cfg.task.kind == "discrete" ? cfg.horizon() : 5;
    DiscreteChainSpec chain = make_lazy_uniform_chain(S, T, cfg.task.stay_prob);
    std::vector<double> table = default_oracle_table(S);
    std::vector<double> logR(S);
    for (std::size_t i = 0; i < S; ++i) logR[i] = table[i];
    ExactSolution sol = exact_flows(chain, logR);
    for (std::size_t t = 1; t <= T; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        sol.log_flow[t][s] += inject_flow_perturbation;
      }
    }
    double worst = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t j = 0; j < S; ++j) {
          const double lhs = sol.log_flow[t][i] + sol.log_policy[t].at(i, j);
          const double rhs = sol.log_flow[t - 1][j] + chain.log_q(t, j, i);
          worst = std::max(worst, std::abs(lhs - rhs));
        }
      }
    }
    emit(checks, "db_identity_exact_flows", worst, 1e-12);
  }

  // Finite-difference suites over the four losses on a small continuous model.
  {
    Model m = make_continuous_model(make_schedule(ScheduleKind::Cosine, 3), 2, 0,
                                    cfg.run.seed + 5);
    m.policy_spec.hidden = {8};
    m.flow_spec.hidden = {8};
    m.theta = net_init(m.policy_spec, cfg.run.seed + 5, false);
    m.phi = net_init(m.flow_spec, cfg.run.seed + 6, true);
    RewardSpec reward = make_ring_reward(1.0);
    reward.beta_max = 2.0;

    std::vector<Trajectory> trajs = rollout(m, reward, 4, {}, cfg.run.seed + 7);
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      for (std::size_t t = 1; t <= 3; ++t) picks.emplace_back(i, t);
    }
    TransitionBatch batch = make_batch(m, trajs, picks, 1.2);

    auto fd_worst = [&](const ParamSet& params,
                        const std::function<Var(Tape&, std::span<const Var>)>& builder,
                        double step) {
      GradResult g = grad(params, builder);
      auto loss_at = [&](const std::vector<double>& flat) {
        ParamSet p2 = params;
        p2.unflatten(flat);
        return grad(p2, builder).loss;
      };
      std::vector<double> fd = finite_diff(loss_at, params.flatten(), step);
      std::vector<double> ad = g.grads.flatten();
      double worst = 0.0;
      for (std::size_t i = 0; i < fd.size(); ++i) {
        worst = std::max(worst, rel_err(ad[i], fd[i]));
      }
      return worst;
    };

    // denoising
    {
      Rng rng(cfg.run.seed + 11);
      Tensor x0({6, 2}), xt({6, 2});
      std::vector<int> ts(6);
      for (std::size_t i = 0; i < 6; ++i) {
        ts[i] = 1 + static_cast<int>(rng.uniform_index(3));
        for (std::size_t j = 0; j < 2; ++j) {
          x0.at(i, j) = rng.normal();
          xt.at(i, j) = m.sched.alpha[ts[i]] * x0.at(i, j) +
                        m.sched.sigma[ts[i]] * rng.normal();
        }
      }
      const double worst =
          fd_worst(m.theta, [&](Tape& t, std::span<const Var> l) {
            Var xhat = net_apply(t, m.policy_spec, l, t.constant(xt), ts, {});
            return t.mean(t.sum_rows(t.square(t.sub(t.constant(x0), xhat))));
          }, 1e-5);
      emit(checks, "fd_denoising_loss", worst, 1e-4);
    }
    // fl-db over theta and phi
    {
      ParamSet joint = ParamSet::join({{"policy.", &m.theta}, {"flow.", &m.phi}});
      const std::size_t n_theta = m.theta.size();
      const double worst =
          fd_worst(joint, [&](Tape& t, std::span<const Var> l) {
            return fl_db_loss_graph(t, m, l.subspan(0, n_theta), l.subspan(n_theta), batch);
          }, 1e-5);
      emit(checks, "fd_fl_db_loss", worst, 1e-4);
    }
    // dag-kl at theta == theta_old with frozen b
    {
      std::vector<double> b = advantage_b(m, batch);
      const double worst =
          fd_worst(m.theta, [&](Tape& t, std::span<const Var> l) {
            return dag_kl_policy_loss_graph(t, m, l, batch, b, 1e-4, 1.0, m.version);
          }, 1e-8);
      emit(checks, "fd_dag_kl_loss", worst, 1e-4);
    }
    // ddpo at theta == theta_old
    {
      std::vector<double> adv = ddpo_advantages(batch);
      const double worst =
          fd_worst(m.theta, [&](Tape& t, std::span<const Var> l) {
            return ddpo_loss_graph(t, m, l, batch, adv, 1e-4, m.version);
          }, 1e-8);
      emit(checks, "fd_ddpo_loss", worst, 1e-4);
    }
  }

  for (const CheckLine& c : checks) {
    if (!c.pass) return 3;
  }
  return 0;
}

}  // namespace dag
