#include <cmath>

#include "dag/errors.hpp"
#include "dag/optim.hpp"

namespace dag {

GradResult grad(const ParamSet& params, const LossBuilder& builder) {
  Tape tape;
  std::vector<Var> leaves = mount_params(tape, params);
  Var loss = builder(tape, leaves);
  if (tape.val(loss).numel() != 1) throw ContractError("grad: loss must be scalar");
  tape.backward(loss);
  GradResult out;
  out.loss = tape.val(loss).item();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.grads.add(params.name(i), tape.grad_of(leaves[i]));
  }
  return out;
}

OptimizerState OptimizerState::init(const ParamSet& params, AdamWConfig cfg) {
  OptimizerState st;
  st.cfg = cfg;
  st.m = ParamSet::zeros_like(params);
  st.v = ParamSet::zeros_like(params);
  st.step = 0;
  return st;
}

AdamWResult adamw_step(const ParamSet& params, const ParamSet& grads,
                       OptimizerState state) {
  if (state.cfg.lr <= 0.0) throw ContractError("adamw_step: learning rate must be > 0");
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ContractError("adamw_step: parameter/gradient/state count mismatch");
  }
  AdamWResult out;
  out.params = params;
  out.state = std::move(state);
  out.state.step += 1;
  const AdamWConfig& c = out.state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(out.state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(out.state.step));

  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params.name(p) != grads.name(p)) {
      throw ContractError("adamw_step: name mismatch at " + params.name(p));
    }
    Tensor& theta = out.params.value(p);
    const Tensor& g = grads.value(p);
    if (!theta.same_shape(g)) {
      throw ContractError("adamw_step: shape mismatch at " + params.name(p));
    }
    Tensor& m = out.state.m.value(p);
    Tensor& v = out.state.v.value(p);
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= c.lr * (m_hat / std::sqrt(v_hat + c.eps));
      theta[i] -= c.lr * c.weight_decay * theta[i];
    }
  }
  return out;
}

ParamSet clip_global_norm(const ParamSet& grads, double max_norm) {
  if (max_norm <= 0.0) throw ContractError("clip_global_norm: max_norm must be > 0");
  const double norm = grads.global_l2_norm();
  ParamSet out = grads;
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (std::size_t p = 0; p < out.size(); ++p) {
      Tensor& t = out.value(p);
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] *= scale;
    }
  }
  return out;
}

}  // namespace dag
