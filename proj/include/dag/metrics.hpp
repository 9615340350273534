#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dag/epoch.hpp"

namespace dag {

// Line-delimited metrics stream: one JSON object per line, keys in fixed
// insertion order, appended with a single write() each so a crash never
// leaves a partial line. All values except wall_s are deterministic for a
// fixed seed.
class MetricsWriter {
public:
  MetricsWriter(const std::string& path, bool append);
  ~MetricsWriter();
  MetricsWriter(const MetricsWriter&) = delete;
  MetricsWriter& operator=(const MetricsWriter&) = delete;

  void write(const nlohmann::ordered_json& record);
  const std::string& path() const { return path_; }

private:
  std::string path_;
  int fd_ = -1;
};

// Optional eval-time distribution metrics appended to an epoch record.
struct EvalMetrics {
  double reward_mean = 0.0, reward_max = 0.0, reward_std = 0.0;
  std::optional<double> tv_opt;    // TV to the DP-optimal terminal distribution
  std::optional<double> tv_rz;     // TV to R/Z
  std::optional<double> kl_opt;    // KL(model || DP-optimal)
  std::optional<double> hist_kl;   // histogram KL to the tempered target (2D)
};

nlohmann::ordered_json epoch_record(const EpochMetrics& m, const std::string& algo,
                                    const std::string& task, std::size_t rollout_size,
                                    const std::optional<EvalMetrics>& eval);

nlohmann::ordered_json pretrain_record(std::uint64_t step, double loss, double wall_s);

std::vector<nlohmann::ordered_json> read_metrics(const std::string& path);

}  // namespace dag
