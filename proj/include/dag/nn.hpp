#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dag/rng.hpp"
#include "dag/tape.hpp"
#include "dag/tensor.hpp"

namespace dag {

// Named parameter tensors with a stable insertion order. The order is part of
// the contract: optimizers, gradient flattening and checkpoints all iterate
// it, so it must be identical across save/load round trips.
class ParamSet {
public:
  void add(std::string name, Tensor value);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& mut(const std::string& name);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }

  // All values concatenated in order; used by finite differences.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  static ParamSet zeros_like(const ParamSet& other);
  // Concatenates with prefixed names ("policy.", "flow.").
  static ParamSet join(const std::vector<std::pair<std::string, const ParamSet*>>& parts);
  ParamSet with_prefix_removed(const std::string& prefix) const;

  double global_l2_norm() const;

private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// MLP over [x | time embedding | condition embedding] with tanh hidden
// layers. Desk-scale stand-in for the U-Net / flow networks.
struct NetSpec {
  std::size_t data_dim = 2;
  std::vector<std::size_t> hidden = {64, 64, 64};
  std::size_t out_dim = 2;
  std::size_t time_emb_dim = 8;   // sinusoidal, fixed
  std::size_t horizon = 20;       // scales t into [0,1]
  std::size_t cond_count = 0;     // 0 = unconditional
  std::size_t cond_emb_dim = 8;   // learned rows when cond_count > 0

  std::size_t in_dim() const {
    return data_dim + time_emb_dim + (cond_count > 0 ? cond_emb_dim : 0);
  }
  std::size_t n_layers() const { return hidden.size() + 1; }
};

// Uniform fan-in init; zero_final zeroes the last layer so the net starts as
// the constant 0 function (used by the flow net).
ParamSet net_init(const NetSpec& spec, std::uint64_t seed, bool zero_final);

Tensor time_embedding(const NetSpec& spec, std::span<const int> ts);

// Plain forward. x: [B, data_dim]; ts: per-row timestep; cs: per-row condition
// id (may be empty when unconditional). Uses the same kernel calls in the same
// order as the tape path, so both produce bit-identical outputs.
Tensor net_forward(const NetSpec& spec, const ParamSet& params, const Tensor& x,
                   std::span<const int> ts, std::span<const int> cs);

// Tape forward. `leaves` are tape inputs aligned with the ParamSet order
// returned by net_init. Differentiable in both parameters and x.
Var net_apply(Tape& tape, const NetSpec& spec, std::span<const Var> leaves,
              Var x, std::span<const int> ts, std::span<const int> cs);

// Mounts every parameter of `params` onto the tape as tracked leaves,
// preserving order.
std::vector<Var> mount_params(Tape& tape, const ParamSet& params);

Tensor batch_rows(std::span<const Tensor> rows);  // stack [d] rows -> [B,d]

}  // namespace dag
