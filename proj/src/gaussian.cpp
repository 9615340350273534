#include "dag/gaussian.hpp"

#include "dag/errors.hpp"
#include "dag/kernels.hpp"

namespace dag {

namespace {
const kernels::KernelTable& K() { return kernels::active(); }
}

double q_transition_logpdf(const NoiseSchedule& s, const Tensor& x_t,
                           const Tensor& x_prev, std::size_t t) {
  const StepCoef& c = s.at(t);
  if (x_t.numel() != x_prev.numel()) throw ContractError("q_transition_logpdf: dim mismatch");
  const std::size_t d = x_t.numel();
  double ss = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = x_t[j] - c.fwd_mean_coef * x_prev[j];
    ss += diff * diff;
  }
  return static_cast<double>(d) * c.log_norm_1d - 0.5 * c.inv_var * ss;
}

Tensor q_marginal_sample(const NoiseSchedule& s, const Tensor& x0, std::size_t t,
                         const Tensor& eps) {
  if (t > s.horizon) throw ContractError("q_marginal_sample: t out of range");
  if (!x0.same_shape(eps)) throw ContractError("q_marginal_sample: eps shape mismatch");
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < x0.numel(); ++i) {
    out[i] = s.alpha[t] * x0[i] + s.sigma[t] * eps[i];
  }
  return out;
}

BatchCoef batch_coef(const NoiseSchedule& s, std::span<const int> ts, std::size_t dim) {
  const std::size_t b = ts.size();
  BatchCoef bc{Tensor({b, dim}), Tensor({b, dim}), Tensor({b}), Tensor({b})};
  for (std::size_t i = 0; i < b; ++i) {
    const StepCoef& c = s.at(static_cast<std::size_t>(ts[i]));
    for (std::size_t j = 0; j < dim; ++j) {
      bc.cx.data()[i * dim + j] = c.post_x_coef;
      bc.cxhat.data()[i * dim + j] = c.post_xhat_coef;
    }
    bc.neg_half_inv_var[i] = -0.5 * c.inv_var;
    bc.log_norm[i] = static_cast<double>(dim) * c.log_norm_1d;
  }
  return bc;
}

Tensor posterior_mean(const NoiseSchedule& s, const Tensor& x_t,
                      const Tensor& xhat, std::span<const int> ts) {
  if (!x_t.same_shape(xhat)) throw ContractError("posterior_mean: shape mismatch");
  const std::size_t dim = x_t.cols();
  BatchCoef bc = batch_coef(s, ts, dim);
  // Same op sequence as posterior_mean_graph: mul, mul, add.
  Tensor t1(x_t.shape()), t2(x_t.shape()), out(x_t.shape());
  K().mul(x_t.data(), bc.cx.data(), t1.data(), t1.numel());
  K().mul(xhat.data(), bc.cxhat.data(), t2.data(), t2.numel());
  K().add(t1.data(), t2.data(), out.data(), out.numel());
  return out;
}

std::vector<double> reverse_logpdf_rows(const NoiseSchedule& s, const Tensor& mean,
                                        const Tensor& x_prev, std::span<const int> ts) {
  if (!mean.same_shape(x_prev)) throw ContractError("reverse_logpdf: shape mismatch");
  const std::size_t b = mean.rows(), d = mean.cols();
  BatchCoef bc = batch_coef(s, ts, d);
  // Mirrors reverse_logpdf_graph: sub, square, row-sum, mul, add.
  Tensor diff(mean.shape()), sq(mean.shape());
  K().sub(x_prev.data(), mean.data(), diff.data(), diff.numel());
  K().mul(diff.data(), diff.data(), sq.data(), sq.numel());
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double ss = K().sum(sq.data() + i * d, d);
    out[i] = ss * bc.neg_half_inv_var[i] + bc.log_norm[i];
  }
  return out;
}

Tensor posterior_sample(const NoiseSchedule& s, const Tensor& mean, const Tensor& eps,
                        std::span<const int> ts) {
  if (!mean.same_shape(eps)) throw ContractError("posterior_sample: eps shape mismatch");
  const std::size_t b = mean.rows(), d = mean.cols();
  Tensor out(mean.shape());
  for (std::size_t i = 0; i < b; ++i) {
    const double sv = s.at(static_cast<std::size_t>(ts[i])).sqrt_var;
    for (std::size_t j = 0; j < d; ++j) {
      out.at(i, j) = mean.at(i, j) + sv * eps.at(i, j);
    }
  }
  return out;
}

Var posterior_mean_graph(Tape& tape, const BatchCoef& bc, Var x_t, Var xhat) {
  Var t1 = tape.mul(x_t, tape.constant(bc.cx));
  Var t2 = tape.mul(xhat, tape.constant(bc.cxhat));
  return tape.add(t1, t2);
}

Var reverse_logpdf_graph(Tape& tape, const BatchCoef& bc, Var mean, Var x_prev) {
  Var diff = tape.sub(x_prev, mean);
  Var ss = tape.sum_rows(tape.square(diff));
  Var scaled = tape.mul(ss, tape.constant(bc.neg_half_inv_var));
  return tape.add(scaled, tape.constant(bc.log_norm));
}

}  // namespace dag
