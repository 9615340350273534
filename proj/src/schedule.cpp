#include <algorithm>
#include "dag/schedule.hpp"

#include <cmath>
#include <numbers>

#include "dag/errors.hpp"

namespace dag {

namespace {
constexpr double kAlphaBarFloor = 1e-5;
}

ScheduleKind schedule_kind_from(const std::string& name) {
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "linear-cumulative") return ScheduleKind::LinearCumulative;
  throw ConfigError("unknown schedule kind: " + name);
}

std::string schedule_kind_name(ScheduleKind k) {
  return k == ScheduleKind::Cosine ? "cosine" : "linear-cumulative";
}

const StepCoef& NoiseSchedule::at(std::size_t t) const {
  if (t < 1 || t > horizon) {
    throw ContractError("schedule step t=" + std::to_string(t) + " out of [1," +
                        std::to_string(horizon) + "]");
  }
  return coef[t];
}

NoiseSchedule make_schedule(ScheduleKind kind, std::size_t horizon) {
  if (horizon < 1) throw ContractError("make_schedule: horizon must be >= 1");
  std::vector<double> abars(horizon + 1);
  const double T = static_cast<double>(horizon);
  for (std::size_t t = 0; t <= horizon; ++t) {
    const double u = static_cast<double>(t) / T;
    double abar;
    if (kind == ScheduleKind::Cosine) {
      const double c = std::cos(u * std::numbers::pi / 2.0);
      abar = c * c;
    } else {
      abar = 1.0 - u * (1.0 - kAlphaBarFloor);
    }
    abars[t] = std::min(1.0, std::max(kAlphaBarFloor, abar));
  }
  return make_schedule_from_alpha_bar(abars);
}

NoiseSchedule make_schedule_from_alpha_bar(const std::vector<double>& alpha_bar) {
  if (alpha_bar.size() < 2) throw ContractError("schedule: need horizon >= 1");
  const std::size_t horizon = alpha_bar.size() - 1;
  NoiseSchedule s;
  s.horizon = horizon;
  s.alpha.resize(horizon + 1);
  s.sigma.resize(horizon + 1);
  s.coef.resize(horizon + 1);
  if (alpha_bar[0] != 1.0) throw ContractError("schedule: alpha_bar[0] must be 1");
  for (std::size_t t = 0; t <= horizon; ++t) {
    const double abar = alpha_bar[t];
    if (!(abar > 0.0 && abar <= 1.0)) {
      throw ContractError("schedule: alpha_bar out of (0,1] at t=" + std::to_string(t));
    }
    s.alpha[t] = std::sqrt(abar);
    s.sigma[t] = std::sqrt(1.0 - abar);
  }
  s.alpha[0] = 1.0;
  s.sigma[0] = 0.0;

  for (std::size_t t = 1; t <= horizon; ++t) {
    if (!(s.alpha[t] < s.alpha[t - 1])) {
      throw NumericalError("make_schedule: alpha not strictly decreasing at t=" +
                           std::to_string(t) + " (horizon too long for the floor)");
    }
    StepCoef& c = s.coef[t];
    c.fwd_mean_coef = s.alpha[t] / s.alpha[t - 1];
    c.var = 1.0 - c.fwd_mean_coef * c.fwd_mean_coef;
    if (!(c.var > 0.0)) {
      throw NumericalError("make_schedule: degenerate kernel at t=" + std::to_string(t));
    }
    c.sqrt_var = std::sqrt(c.var);
    c.inv_var = 1.0 / c.var;
    c.log_norm_1d = -0.5 * std::log(2.0 * std::numbers::pi * c.var);
    const double sig_prev_sq = s.sigma[t - 1] * s.sigma[t - 1];
    const double sig_sq = s.sigma[t] * s.sigma[t];
    const double denom = sig_sq * s.alpha[t - 1];
    c.post_x_coef = sig_prev_sq * s.alpha[t] / denom;
    c.post_xhat_coef =
        (s.alpha[t - 1] * s.alpha[t - 1] - s.alpha[t] * s.alpha[t]) / denom;
  }
  return s;
}

}  // namespace dag
