#pragma once

#include <cstdint>

#include "dag/discrete.hpp"
#include "dag/nn.hpp"
#include "dag/schedule.hpp"

namespace dag {

enum class ChainKind { Continuous, Discrete };

// The full sampler state: denoising policy theta, flow phi, and the chain
// they live on. `version` identifies the parameter snapshot; it is bumped on
// every optimizer update so rollouts can be matched to the parameters that
// produced them.
struct Model {
  ChainKind kind = ChainKind::Continuous;

  // continuous
  NoiseSchedule sched;
  NetSpec policy_spec;  // out_dim == data_dim (x0 prediction)
  NetSpec flow_spec;    // out_dim == 1 (log F-tilde)

  // discrete
  DiscreteChainSpec chain;

  ParamSet theta;  // policy parameters
  ParamSet phi;    // flow parameters

  std::uint64_t version = 0;

  std::size_t horizon() const {
    return kind == ChainKind::Continuous ? sched.horizon : chain.horizon;
  }
  std::size_t data_dim() const { return policy_spec.data_dim; }
};

Model make_continuous_model(NoiseSchedule sched, std::size_t data_dim,
                            std::size_t cond_count, std::uint64_t seed);
Model make_discrete_model(DiscreteChainSpec chain);

}  // namespace dag
