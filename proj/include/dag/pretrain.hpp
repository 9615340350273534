#pragma once

#include <span>

#include "dag/model.hpp"
#include "dag/optim.hpp"
#include "dag/rng.hpp"

namespace dag {

// One maximum-likelihood pretraining step on the denoising objective
// E ||x0 - xhat(a_t x0 + s_t eps, t)||^2 with t uniform in [1, T].
// Applies one AdamW step to model.theta and returns the batch loss.
double denoising_pretrain_step(Model& model, OptimizerState& opt,
                               const Tensor& x0_batch, std::span<const int> conds,
                               Rng& rng);

}  // namespace dag
