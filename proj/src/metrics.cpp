#include "dag/metrics.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <fstream>

#include "dag/errors.hpp"

namespace dag {

MetricsWriter::MetricsWriter(const std::string& path, bool append) : path_(path) {
  int flags = O_WRONLY | O_CREAT | (append ? O_APPEND : O_TRUNC);
  fd_ = ::open(path.c_str(), flags, 0644);
  if (fd_ < 0) throw ContractError("cannot open metrics file: " + path);
}

MetricsWriter::~MetricsWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void MetricsWriter::write(const nlohmann::ordered_json& record) {
  std::string line = record.dump();
  line.push_back('\n');
  const char* data = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, data, left);
    if (n < 0) throw ContractError("metrics write failed: " + path_);
    data += n;
    left -= static_cast<std::size_t>(n);
  }
}

namespace {
nlohmann::ordered_json num_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}
}  // namespace

nlohmann::ordered_json epoch_record(const EpochMetrics& m, const std::string& algo,
                                    const std::string& task, std::size_t rollout_size,
                                    const std::optional<EvalMetrics>& eval) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["step"] = m.global_step;
  j["trajectories"] = (m.epoch + 1) * rollout_size;
  j["wall_s"] = m.wall_s;
  j["algo"] = algo;
  j["task"] = task;
  j["reward_mean"] = m.reward_mean;
  j["reward_max"] = m.reward_max;
  j["reward_std"] = m.reward_std;
  j["loss_fl_db"] = num_or_null(m.loss_fl_db);
  j["loss_dag_kl"] = num_or_null(m.loss_dag_kl);
  j["loss_kl_reg"] = num_or_null(m.loss_kl_reg);
  j["loss_ddpo"] = num_or_null(m.loss_ddpo);
  j["beta"] = m.beta;
  j["grad_norm_theta"] = num_or_null(m.grad_norm_theta);
  j["grad_norm_phi"] = num_or_null(m.grad_norm_phi);
  if (eval) {
    j["eval_reward_mean"] = eval->reward_mean;
    j["eval_reward_max"] = eval->reward_max;
    j["eval_reward_std"] = eval->reward_std;
    if (eval->tv_opt) j["eval_tv_opt"] = *eval->tv_opt;
    if (eval->tv_rz) j["eval_tv_rz"] = *eval->tv_rz;
    if (eval->kl_opt) j["eval_kl_opt"] = *eval->kl_opt;
    if (eval->hist_kl) j["eval_hist_kl"] = *eval->hist_kl;
  }
  return j;
}

nlohmann::ordered_json pretrain_record(std::uint64_t step, double loss, double wall_s) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["wall_s"] = wall_s;
  j["pretrain_loss"] = loss;
  return j;
}

std::vector<nlohmann::ordered_json> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open metrics file: " + path);
  std::vector<nlohmann::ordered_json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::ordered_json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ContractError(path + ":" + std::to_string(lineno) +
                          ": bad metrics line: " + e.what());
    }
  }
  return out;
}

}  // namespace dag
