#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dag {

enum class ScheduleKind { Cosine, LinearCumulative };

ScheduleKind schedule_kind_from(const std::string& name);
std::string schedule_kind_name(ScheduleKind k);

// Per-step coefficients shared by the forward kernel, the reverse
// parameterization and the rollout/recompute paths. Everything that evaluates
// a transition density reads these exact doubles, so cached log-probabilities
// reproduce bit-identically.
struct StepCoef {
  double fwd_mean_coef;   // alpha_t / alpha_{t-1}
  double var;             // 1 - (alpha_t/alpha_{t-1})^2, forward == reverse
  double sqrt_var;
  double inv_var;
  double log_norm_1d;     // -0.5 * log(2*pi*var)
  double post_x_coef;     // sigma_{t-1}^2 alpha_t / (sigma_t^2 alpha_{t-1})
  double post_xhat_coef;  // (alpha_{t-1}^2 - alpha_t^2) / (sigma_t^2 alpha_{t-1})
};

// Signal/noise ladder with alpha_t^2 + sigma_t^2 = 1, alpha_0 = 1, alpha
// strictly decreasing. alpha_bar is clamped to >= 1e-5 to keep every kernel
// non-degenerate.
struct NoiseSchedule {
  std::size_t horizon = 0;            // T
  std::vector<double> alpha;          // [0..T]
  std::vector<double> sigma;          // [0..T]
  std::vector<StepCoef> coef;         // [0..T]; index 0 unused

  const StepCoef& at(std::size_t t) const;
};

NoiseSchedule make_schedule(ScheduleKind kind, std::size_t horizon);

// Builds a schedule from explicit alpha_bar values (index 0..T). Must start
// at 1 and be strictly decreasing within (0, 1].
NoiseSchedule make_schedule_from_alpha_bar(const std::vector<double>& alpha_bar);

}  // namespace dag
