#include "dag/pretrain.hpp"

#include "dag/errors.hpp"
#include "dag/gaussian.hpp"

namespace dag {

double denoising_pretrain_step(Model& model, OptimizerState& opt,
                               const Tensor& x0_batch, std::span<const int> conds,
                               Rng& rng) {
  if (model.kind != ChainKind::Continuous) {
    throw ContractError("pretraining applies to the continuous chain only");
  }
  const std::size_t b = x0_batch.rows();
  if (b == 0) throw ContractError("pretrain step: empty batch");
  const std::size_t d = model.policy_spec.data_dim;
  const std::size_t T = model.sched.horizon;

  std::vector<int> ts(b);
  Tensor x_t({b, d});
  for (std::size_t i = 0; i < b; ++i) {
    ts[i] = 1 + static_cast<int>(rng.uniform_index(T));
    const double a = model.sched.alpha[static_cast<std::size_t>(ts[i])];
    const double s = model.sched.sigma[static_cast<std::size_t>(ts[i])];
    for (std::size_t j = 0; j < d; ++j) {
      x_t.at(i, j) = a * x0_batch.at(i, j) + s * rng.normal();
    }
  }
  std::span<const int> cspan =
      model.policy_spec.cond_count > 0 ? conds : std::span<const int>();

  GradResult g = grad(model.theta, [&](Tape& tape, std::span<const Var> leaves) {
    Var xt = tape.constant(x_t);
    Var xhat = net_apply(tape, model.policy_spec, leaves, xt, ts, cspan);
    Var diff = tape.sub(tape.constant(x0_batch), xhat);
    return tape.mean(tape.sum_rows(tape.square(diff)));
  });

  AdamWResult r = adamw_step(model.theta, g.grads, std::move(opt));
  model.theta = std::move(r.params);
  opt = std::move(r.state);
  model.version += 1;
  return g.loss;
}

}  // namespace dag
