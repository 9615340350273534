#pragma once

#include <span>

#include "dag/schedule.hpp"
#include "dag/tape.hpp"
#include "dag/tensor.hpp"

namespace dag {

// Gaussian transition machinery for the continuous chain. The plain and tape
// paths are built from the same kernel calls in the same order, so a
// log-probability cached at rollout time is reproduced bit-identically when
// the transition is re-evaluated on a tape with the same parameters.

// Forward kernel q(x_t | x_{t-1}) = N(x_t; (a_t/a_{t-1}) x_{t-1}, var_t I),
// summed over dimensions. Throws on t out of range.
double q_transition_logpdf(const NoiseSchedule& s, const Tensor& x_t,
                           const Tensor& x_prev, std::size_t t);

// Marginal draw x_t = a_t x_0 + s_t eps.
Tensor q_marginal_sample(const NoiseSchedule& s, const Tensor& x0, std::size_t t,
                         const Tensor& eps);

// Reverse mean for one batch row set: mean = c_x * x_t + c_xhat * xhat.
// ts supplies the per-row step. Variance is schedule-determined.
Tensor posterior_mean(const NoiseSchedule& s, const Tensor& x_t,
                      const Tensor& xhat, std::span<const int> ts);

// log N(x_prev; mean, var_t I) per row.
std::vector<double> reverse_logpdf_rows(const NoiseSchedule& s, const Tensor& mean,
                                        const Tensor& x_prev, std::span<const int> ts);

// Reparameterized draw mean + sqrt(var_t) * eps, row-wise.
Tensor posterior_sample(const NoiseSchedule& s, const Tensor& mean, const Tensor& eps,
                        std::span<const int> ts);

// Per-row constants replicated for graph building.
struct BatchCoef {
  Tensor cx;          // [B,d]: post_x_coef per row
  Tensor cxhat;       // [B,d]
  Tensor neg_half_inv_var;  // [B]
  Tensor log_norm;    // [B]: d * log_norm_1d
};
BatchCoef batch_coef(const NoiseSchedule& s, std::span<const int> ts, std::size_t dim);

// Tape versions. x_t/x_prev enter as constants; xhat is a graph node.
Var posterior_mean_graph(Tape& tape, const BatchCoef& bc, Var x_t, Var xhat);
Var reverse_logpdf_graph(Tape& tape, const BatchCoef& bc, Var mean, Var x_prev);

}  // namespace dag
