#pragma once

#include <string>
#include <vector>

#include "dag/config.hpp"

namespace dag {

// Subcommand implementations behind the CLI. Each returns a process exit
// code: 0 success, 1 contract/config error (thrown), 2 numerical failure
// (thrown), 3 oracle-check failure (returned).

int cmd_pretrain(const RunConfig& cfg);
int cmd_align(const RunConfig& cfg, const std::string& resume_path);
// n_samples_override: negative = use the config's eval_samples; 0 is an
// empty-sample contract error.
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             long long n_samples_override);
int cmd_compare(const std::vector<std::string>& metrics_files, const std::string& out_dir);
// inject_flow_perturbation adds the given offset to every learnable log-flow
// before the DB-identity check (fault-injection hook for tests).
int cmd_oracle_check(const RunConfig& cfg, double inject_flow_perturbation);

}  // namespace dag
