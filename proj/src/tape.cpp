#include <algorithm>
#include "dag/tape.hpp"

#include <cmath>
#include <utility>

#include "dag/errors.hpp"
#include "dag/kernels.hpp"

namespace dag {

namespace {
const kernels::KernelTable& K() { return kernels::active(); }
}  // namespace

Var Tape::push(Tensor value, bool tracked, std::string label,
               std::function<void(Tape&, const Tensor&)> pull) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced by node #" +
                         std::to_string(nodes_.size()) + " (" + label + ")");
  }
  nodes_.push_back(Node{std::move(value), std::move(pull), std::move(label), tracked});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Tensor value, bool track, std::string label) {
  return push(std::move(value), track, std::move(label), nullptr);
}

void Tape::check_same_tape(Var v) const {
  if (v.tape != this) throw ContractError("Var belongs to a different tape");
}

void Tape::accum(std::uint32_t idx, const Tensor& g) {
  if (!nodes_[idx].tracked) return;
  Tensor& slot = grads_[idx];
  if (slot.empty()) {
    slot = g;
  } else {
    K().add(slot.data(), g.data(), slot.data(), slot.numel());
  }
}

void Tape::accum_scaled(std::uint32_t idx, double c, const Tensor& g) {
  if (!nodes_[idx].tracked) return;
  Tensor& slot = grads_[idx];
  if (slot.empty()) slot = Tensor::zeros(nodes_[idx].value.shape());
  K().axpy(c, g.data(), slot.data(), slot.numel());
}

const Tensor& Tape::val(Var v) const {
  check_same_tape(v);
  return nodes_[v.idx].value;
}

Tensor Tape::grad_of(Var v) const {
  check_same_tape(v);
  if (v.idx < grads_.size() && !grads_[v.idx].empty()) return grads_[v.idx];
  return Tensor::zeros(nodes_[v.idx].value.shape());
}

void Tape::backward(Var loss) {
  check_same_tape(loss);
  if (nodes_[loss.idx].value.numel() != 1) {
    throw ContractError("backward: loss must be a scalar");
  }
  grads_.assign(nodes_.size(), Tensor{});
  if (!nodes_[loss.idx].tracked) return;  // nothing depends on tracked inputs
  grads_[loss.idx] = Tensor::scalar(1.0);
  for (std::uint32_t i = loss.idx + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.tracked || grads_[i].empty() || !n.pull) continue;
    n.pull(*this, grads_[i]);
  }
}

// ---- elementwise ----

Var Tape::add(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ContractError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out(ta.shape());
  K().add(ta.data(), tb.data(), out.data(), out.numel());
  bool tr = tracked(a) || tracked(b);
  auto ai = a.idx, bi = b.idx;
  return push(std::move(out), tr, "add", [ai, bi](Tape& t, const Tensor& g) {
    t.accum(ai, g);
    t.accum(bi, g);
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ContractError("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out(ta.shape());
  K().sub(ta.data(), tb.data(), out.data(), out.numel());
  bool tr = tracked(a) || tracked(b);
  auto ai = a.idx, bi = b.idx;
  return push(std::move(out), tr, "sub", [ai, bi](Tape& t, const Tensor& g) {
    t.accum(ai, g);
    t.accum_scaled(bi, -1.0, g);
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ContractError("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out(ta.shape());
  K().mul(ta.data(), tb.data(), out.data(), out.numel());
  bool tr = tracked(a) || tracked(b);
  auto ai = a.idx, bi = b.idx;
  return push(std::move(out), tr, "mul", [ai, bi](Tape& t, const Tensor& g) {
    Tensor tmp(g.shape());
    K().mul(g.data(), t.nodes_[bi].value.data(), tmp.data(), tmp.numel());
    t.accum(ai, tmp);
    K().mul(g.data(), t.nodes_[ai].value.data(), tmp.data(), tmp.numel());
    t.accum(bi, tmp);
  });
}

Var Tape::square(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  K().mul(ta.data(), ta.data(), out.data(), out.numel());
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "square", [ai](Tape& t, const Tensor& g) {
    Tensor tmp(g.shape());
    K().mul(g.data(), t.nodes_[ai].value.data(), tmp.data(), tmp.numel());
    t.accum_scaled(ai, 2.0, tmp);
  });
}

Var Tape::tanh(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) out[i] = std::tanh(ta[i]);
  auto ai = a.idx;
  Var v = push(std::move(out), tracked(a), "tanh", nullptr);
  auto yi = v.idx;
  nodes_[yi].pull = [ai, yi](Tape& t, const Tensor& g) {
    const Tensor& y = t.nodes_[yi].value;
    Tensor tmp(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) tmp[i] = g[i] * (1.0 - y[i] * y[i]);
    t.accum(ai, tmp);
  };
  return v;
}

Var Tape::exp(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) out[i] = std::exp(ta[i]);
  auto ai = a.idx;
  Var v = push(std::move(out), tracked(a), "exp", nullptr);
  auto yi = v.idx;
  nodes_[yi].pull = [ai, yi](Tape& t, const Tensor& g) {
    Tensor tmp(g.shape());
    K().mul(g.data(), t.nodes_[yi].value.data(), tmp.data(), tmp.numel());
    t.accum(ai, tmp);
  };
  return v;
}

Var Tape::log(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) out[i] = std::log(ta[i]);
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "log", [ai](Tape& t, const Tensor& g) {
    const Tensor& x = t.nodes_[ai].value;
    Tensor tmp(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) tmp[i] = g[i] / x[i];
    t.accum(ai, tmp);
  });
}

Var Tape::add_scalar(Var a, double c) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) out[i] = ta[i] + c;
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "add_scalar",
              [ai](Tape& t, const Tensor& g) { t.accum(ai, g); });
}

Var Tape::mul_scalar(Var a, double c) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  K().scale(c, ta.data(), out.data(), out.numel());
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "mul_scalar",
              [ai, c](Tape& t, const Tensor& g) { t.accum_scaled(ai, c, g); });
}

// ---- structured ----

Var Tape::add_rowvec(Var m, Var r) {
  check_same_tape(m);
  check_same_tape(r);
  const Tensor& tm = val(m);
  const Tensor& tr = val(r);
  if (tm.ndim() != 2 || tr.ndim() != 1 || tm.cols() != tr.numel()) {
    throw ContractError("add_rowvec: need [B,N] + [N], got " + tm.shape_str() +
                        " + " + tr.shape_str());
  }
  const std::size_t rows = tm.rows(), cols = tm.cols();
  Tensor out(tm.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    K().add(tm.data() + i * cols, tr.data(), out.data() + i * cols, cols);
  }
  bool trk = tracked(m) || tracked(r);
  auto mi = m.idx, ri = r.idx;
  return push(std::move(out), trk, "add_rowvec",
              [mi, ri, rows, cols](Tape& t, const Tensor& g) {
                t.accum(mi, g);
                if (t.nodes_[ri].tracked) {
                  Tensor gb({cols});
                  for (std::size_t i = 0; i < rows; ++i) {
                    K().axpy(1.0, g.data() + i * cols, gb.data(), cols);
                  }
                  t.accum(ri, gb);
                }
              });
}

Var Tape::sub_colvec(Var m, Var v) {
  check_same_tape(m);
  check_same_tape(v);
  const Tensor& tm = val(m);
  const Tensor& tv = val(v);
  if (tm.ndim() != 2 || tv.ndim() != 1 || tm.rows() != tv.numel()) {
    throw ContractError("sub_colvec: need [B,N] - [B], got " + tm.shape_str() +
                        " - " + tv.shape_str());
  }
  const std::size_t rows = tm.rows(), cols = tm.cols();
  Tensor out(tm.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const double vi = tv[i];
    const double* src = tm.data() + i * cols;
    double* dst = out.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j] - vi;
  }
  bool trk = tracked(m) || tracked(v);
  auto mi = m.idx, vi_ = v.idx;
  return push(std::move(out), trk, "sub_colvec",
              [mi, vi_, rows, cols](Tape& t, const Tensor& g) {
                t.accum(mi, g);
                if (t.nodes_[vi_].tracked) {
                  Tensor gv({rows});
                  for (std::size_t i = 0; i < rows; ++i) {
                    gv[i] = -K().sum(g.data() + i * cols, cols);
                  }
                  t.accum(vi_, gv);
                }
              });
}

Var Tape::matmul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.cols() != tb.rows()) {
    throw ContractError("matmul: incompatible " + ta.shape_str() + " x " + tb.shape_str());
  }
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out({m, n});
  K().gemm_nn(ta.data(), tb.data(), out.data(), m, k, n, false);
  bool trk = tracked(a) || tracked(b);
  auto ai = a.idx, bi = b.idx;
  return push(std::move(out), trk, "matmul",
              [ai, bi, m, k, n](Tape& t, const Tensor& g) {
                if (t.nodes_[ai].tracked) {
                  Tensor& ga = t.grads_[ai];
                  if (ga.empty()) ga = Tensor::zeros(t.nodes_[ai].value.shape());
                  // dA += g * B^T
                  K().gemm_nt(g.data(), t.nodes_[bi].value.data(), ga.data(), m, n, k, true);
                }
                if (t.nodes_[bi].tracked) {
                  Tensor& gb = t.grads_[bi];
                  if (gb.empty()) gb = Tensor::zeros(t.nodes_[bi].value.shape());
                  // dB += A^T * g
                  K().gemm_tn(t.nodes_[ai].value.data(), g.data(), gb.data(), k, m, n, true);
                }
              });
}

Var Tape::sum(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out = Tensor::scalar(K().sum(ta.data(), ta.numel()));
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "sum", [ai](Tape& t, const Tensor& g) {
    Tensor tmp = Tensor::full(t.nodes_[ai].value.shape(), g[0]);
    t.accum(ai, tmp);
  });
}

Var Tape::mean(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  const double inv = 1.0 / static_cast<double>(ta.numel());
  Tensor out = Tensor::scalar(K().sum(ta.data(), ta.numel()) * inv);
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "mean", [ai, inv](Tape& t, const Tensor& g) {
    Tensor tmp = Tensor::full(t.nodes_[ai].value.shape(), g[0] * inv);
    t.accum(ai, tmp);
  });
}

Var Tape::sum_rows(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  if (ta.ndim() != 2) throw ContractError("sum_rows: need rank-2, got " + ta.shape_str());
  const std::size_t rows = ta.rows(), cols = ta.cols();
  Tensor out({rows});
  for (std::size_t i = 0; i < rows; ++i) out[i] = K().sum(ta.data() + i * cols, cols);
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "sum_rows",
              [ai, rows, cols](Tape& t, const Tensor& g) {
                Tensor tmp({rows, cols});
                for (std::size_t i = 0; i < rows; ++i) {
                  double gi = g[i];
                  double* row = tmp.data() + i * cols;
                  for (std::size_t j = 0; j < cols; ++j) row[j] = gi;
                }
                t.accum(ai, tmp);
              });
}

Var Tape::logsumexp_rows(Var a) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  if (ta.ndim() != 2) throw ContractError("logsumexp_rows: need rank-2");
  const std::size_t rows = ta.rows(), cols = ta.cols();
  Tensor out({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = ta.data() + i * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(row[j] - mx);
    out[i] = mx + std::log(s);
  }
  auto ai = a.idx;
  Var v = push(std::move(out), tracked(a), "logsumexp_rows", nullptr);
  auto yi = v.idx;
  nodes_[yi].pull = [ai, yi, rows, cols](Tape& t, const Tensor& g) {
    const Tensor& x = t.nodes_[ai].value;
    const Tensor& y = t.nodes_[yi].value;
    Tensor tmp({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
      const double* row = x.data() + i * cols;
      double* trow = tmp.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        trow[j] = g[i] * std::exp(row[j] - y[i]);
      }
    }
    t.accum(ai, tmp);
  };
  return v;
}

Var Tape::gather_rows(Var params, std::vector<std::size_t> idx) {
  check_same_tape(params);
  const Tensor& tp = val(params);
  if (tp.ndim() != 2) throw ContractError("gather_rows: need rank-2 table");
  const std::size_t cols = tp.cols();
  for (std::size_t r : idx) {
    if (r >= tp.rows()) throw ContractError("gather_rows: row index out of range");
  }
  Tensor out({idx.size(), cols});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const double* src = tp.data() + idx[b] * cols;
    double* dst = out.data() + b * cols;
    for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j];
  }
  auto pi = params.idx;
  return push(std::move(out), tracked(params), "gather_rows",
              [pi, cols, idx = std::move(idx)](Tape& t, const Tensor& g) {
                if (!t.nodes_[pi].tracked) return;
                Tensor& gp = t.grads_[pi];
                if (gp.empty()) gp = Tensor::zeros(t.nodes_[pi].value.shape());
                for (std::size_t b = 0; b < idx.size(); ++b) {
                  K().axpy(1.0, g.data() + b * cols, gp.data() + idx[b] * cols, cols);
                }
              });
}

Var Tape::pick_cols(Var a, std::vector<std::size_t> cols) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  if (ta.ndim() != 2 || cols.size() != ta.rows()) {
    throw ContractError("pick_cols: need [B,N] with B column indices");
  }
  const std::size_t n = ta.cols();
  for (std::size_t c : cols) {
    if (c >= n) throw ContractError("pick_cols: column index out of range");
  }
  Tensor out({cols.size()});
  for (std::size_t b = 0; b < cols.size(); ++b) out[b] = ta.data()[b * n + cols[b]];
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "pick_cols",
              [ai, n, cols = std::move(cols)](Tape& t, const Tensor& g) {
                if (!t.nodes_[ai].tracked) return;
                Tensor& ga = t.grads_[ai];
                if (ga.empty()) ga = Tensor::zeros(t.nodes_[ai].value.shape());
                for (std::size_t b = 0; b < cols.size(); ++b) {
                  ga.data()[b * n + cols[b]] += g[b];
                }
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  std::size_t rows = val(parts[0]).rows();
  std::size_t total = 0;
  bool trk = false;
  for (Var p : parts) {
    check_same_tape(p);
    const Tensor& tp = val(p);
    if (tp.ndim() != 2 || tp.rows() != rows) {
      throw ContractError("concat_cols: row mismatch");
    }
    total += tp.cols();
    trk = trk || tracked(p);
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> spans;  // (node, cols)
  for (Var p : parts) {
    const Tensor& tp = val(p);
    const std::size_t c = tp.cols();
    for (std::size_t i = 0; i < rows; ++i) {
      const double* src = tp.data() + i * c;
      double* dst = out.data() + i * total + off;
      for (std::size_t j = 0; j < c; ++j) dst[j] = src[j];
    }
    spans.emplace_back(p.idx, c);
    off += c;
  }
  return push(std::move(out), trk, "concat_cols",
              [rows, total, spans = std::move(spans)](Tape& t, const Tensor& g) {
                std::size_t off = 0;
                for (auto [pi, c] : spans) {
                  if (t.nodes_[pi].tracked) {
                    Tensor gp({rows, c});
                    for (std::size_t i = 0; i < rows; ++i) {
                      const double* src = g.data() + i * total + off;
                      double* dst = gp.data() + i * c;
                      for (std::size_t j = 0; j < c; ++j) dst[j] = src[j];
                    }
                    t.accum(pi, gp);
                  }
                  off += c;
                }
              });
}

Var Tape::stop_gradient(Var a) {
  check_same_tape(a);
  return push(val(a), false, "stop_gradient", nullptr);
}

Var Tape::clamp(Var a, double lo, double hi) {
  check_same_tape(a);
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    out[i] = ta[i] < lo ? lo : (ta[i] > hi ? hi : ta[i]);
  }
  auto ai = a.idx;
  return push(std::move(out), tracked(a), "clamp",
              [ai, lo, hi](Tape& t, const Tensor& g) {
                const Tensor& x = t.nodes_[ai].value;
                Tensor tmp(g.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) {
                  tmp[i] = (x[i] > lo && x[i] < hi) ? g[i] : 0.0;
                }
                t.accum(ai, tmp);
              });
}

Var Tape::min_elem(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw ContractError("min_elem: shape mismatch");
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) out[i] = ta[i] <= tb[i] ? ta[i] : tb[i];
  bool trk = tracked(a) || tracked(b);
  auto ai = a.idx, bi = b.idx;
  return push(std::move(out), trk, "min_elem", [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& x = t.nodes_[ai].value;
    const Tensor& y = t.nodes_[bi].value;
    Tensor tmp(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) tmp[i] = x[i] <= y[i] ? g[i] : 0.0;
    t.accum(ai, tmp);
    for (std::size_t i = 0; i < g.numel(); ++i) tmp[i] = x[i] <= y[i] ? 0.0 : g[i];
    t.accum(bi, tmp);
  });
}

}  // namespace dag
