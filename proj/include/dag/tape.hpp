#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dag/tensor.hpp"

namespace dag {

class Tape;

// Handle into a tape. Cheap to copy; only valid for the tape that made it.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t idx = UINT32_MAX;
  bool valid() const { return tape != nullptr; }
};

// Reverse-mode tape. Nodes are whole-tensor primitive ops appended in
// evaluation order, which is already a topological order; backward() walks
// them once in reverse. Every forward result is checked for finiteness and a
// NumericalError names the offending node.
//
// Gradient tracking: a node is tracked iff any parent is tracked; inputs
// choose. Values are immutable once recorded.
class Tape {
public:
  Var input(Tensor value, bool track, std::string label);
  Var constant(Tensor value) { return input(std::move(value), false, "const"); }

  // elementwise, equal shapes
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var square(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);

  Var add_scalar(Var a, double c);
  Var mul_scalar(Var a, double c);

  // m: [B,N], r: [N]; result m[i,:] + r
  Var add_rowvec(Var m, Var r);
  // m: [B,N], v: [B]; result m[i,j] - v[i]
  Var sub_colvec(Var m, Var v);
  // a: [M,K], b: [K,N]
  Var matmul(Var a, Var b);

  Var sum(Var a);                         // -> {1}
  Var mean(Var a);                        // -> {1}
  Var sum_rows(Var a);                    // [B,N] -> [B]
  Var logsumexp_rows(Var a);              // [B,N] -> [B]

  // params: [S,N], idx in [0,S) per output row -> [B,N]; backward scatter-adds
  Var gather_rows(Var params, std::vector<std::size_t> idx);
  // a: [B,N], col per row -> [B]
  Var pick_cols(Var a, std::vector<std::size_t> cols);
  Var concat_cols(const std::vector<Var>& parts);  // all [B,Ni]

  Var stop_gradient(Var a);
  Var clamp(Var a, double lo, double hi);  // zero gradient outside (lo,hi)
  Var min_elem(Var a, Var b);              // ties take a's gradient

  const Tensor& val(Var v) const;
  // After backward(); zeros-shaped if the node received no gradient.
  Tensor grad_of(Var v) const;

  void backward(Var loss);  // loss must be scalar ({1})

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    std::function<void(Tape&, const Tensor&)> pull;  // null for inputs
    std::string label;
    bool tracked = false;
  };

  Var push(Tensor value, bool tracked, std::string label,
           std::function<void(Tape&, const Tensor&)> pull);
  void accum(std::uint32_t idx, const Tensor& g);
  void accum_scaled(std::uint32_t idx, double c, const Tensor& g);
  bool tracked(Var v) const { return nodes_[v.idx].tracked; }
  void check_same_tape(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Operator sugar for graph building.
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }

}  // namespace dag
