#pragma once

#include <functional>
#include <span>

#include "dag/nn.hpp"

namespace dag {

// Builds a scalar loss on the given tape from parameter leaves (aligned with
// the ParamSet order).
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradResult {
  double loss = 0.0;
  ParamSet grads;
};

// Evaluates the loss and returns one gradient tensor per parameter.
// Parameters are unmodified; non-finite intermediates raise NumericalError.
GradResult grad(const ParamSet& params, const LossBuilder& builder);

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Per-parameter first/second moments plus the shared step counter.
struct OptimizerState {
  AdamWConfig cfg;
  ParamSet m;
  ParamSet v;
  std::uint64_t step = 0;

  static OptimizerState init(const ParamSet& params, AdamWConfig cfg);
};

struct AdamWResult {
  ParamSet params;
  OptimizerState state;
};

// Decoupled-weight-decay adaptive moment update with bias correction.
// Denominator is sqrt(v_hat + eps).
AdamWResult adamw_step(const ParamSet& params, const ParamSet& grads,
                       OptimizerState state);

// Scales all gradients by max_norm/N when the global L2 norm N exceeds
// max_norm; otherwise returns them unchanged.
ParamSet clip_global_norm(const ParamSet& grads, double max_norm);

}  // namespace dag
