#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dag/commands.hpp"
#include "dag/errors.hpp"

namespace {

dag::RunConfig load_config(const std::string& path, long long seed_override,
                           const std::string& out_override) {
  if (path.empty()) throw dag::ConfigError("--config is required");
  dag::RunConfig cfg = dag::parse_config(path);
  if (seed_override >= 0) cfg.run.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.run.out = out_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dagalign: post-trains denoising samplers toward reward-proportional "
               "terminal distributions (DAG-DB / DAG-KL / DDPO)"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may come after the subcommand

  std::string config_path;
  long long seed_override = -1;
  std::string out_override;
  std::string resume_path;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed_override, "override [run] seed");
  app.add_option("--out", out_override, "override [run] out directory");
  app.add_option("--resume", resume_path, "resume from an align checkpoint");

  CLI::App* pretrain = app.add_subcommand("pretrain", "maximum-likelihood pretraining");
  CLI::App* align = app.add_subcommand("align", "reward alignment (Algorithm 1)");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt;
  long long eval_samples = -1;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();
  eval->add_option("--samples", eval_samples, "number of terminal samples");
  CLI::App* compare = app.add_subcommand("compare", "plot metrics files side by side");
  std::vector<std::string> compare_files;
  std::string compare_out = "compare_out";
  compare->add_option("files", compare_files, "metrics.jsonl files")->required();
  compare->add_option("--out", compare_out, "output directory");
  CLI::App* oracle = app.add_subcommand("oracle-check", "exact verification suite");
  double inject = 0.0;
  oracle->add_option("--inject-flow-perturbation", inject,
                     "offset added to the exact log-flows (fault injection)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) {
      return dag::cmd_pretrain(load_config(config_path, seed_override, out_override));
    }
    if (align->parsed()) {
      return dag::cmd_align(load_config(config_path, seed_override, out_override),
                            resume_path);
    }
    if (eval->parsed()) {
      return dag::cmd_eval(load_config(config_path, seed_override, out_override),
                           eval_ckpt, eval_samples);
    }
    if (compare->parsed()) {
      return dag::cmd_compare(compare_files, compare_out);
    }
    if (oracle->parsed()) {
      dag::RunConfig cfg;
      if (!config_path.empty()) {
        cfg = dag::parse_config(config_path);
      } else {
        cfg.task.kind = "discrete";
        cfg.reward.id = "table";
      }
      if (seed_override >= 0) cfg.run.seed = static_cast<std::uint64_t>(seed_override);
      return dag::cmd_oracle_check(cfg, inject);
    }
  } catch (const dag::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const dag::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
