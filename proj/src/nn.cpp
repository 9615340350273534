#include "dag/nn.hpp"

#include <cmath>
#include <numbers>

#include "dag/errors.hpp"
#include "dag/kernels.hpp"

namespace dag {

namespace {
const kernels::KernelTable& K() { return kernels::active(); }

std::string layer_w(std::size_t i) { return "layer" + std::to_string(i) + ".weight"; }
std::string layer_b(std::size_t i) { return "layer" + std::to_string(i) + ".bias"; }
}  // namespace

void ParamSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ContractError("ParamSet: duplicate name " + name);
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParamSet: unknown name " + name);
  return values_[it->second];
}

Tensor& ParamSet::mut(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParamSet: unknown name " + name);
  return values_[it->second];
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  for (const Tensor& t : values_) out.insert(out.end(), t.vec().begin(), t.vec().end());
  return out;
}

void ParamSet::unflatten(std::span<const double> flat) {
  std::size_t off = 0;
  for (Tensor& t : values_) {
    if (off + t.numel() > flat.size()) throw ContractError("unflatten: too few values");
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = flat[off + i];
    off += t.numel();
  }
  if (off != flat.size()) throw ContractError("unflatten: too many values");
}

ParamSet ParamSet::zeros_like(const ParamSet& other) {
  ParamSet out;
  for (std::size_t i = 0; i < other.size(); ++i) {
    out.add(other.name(i), Tensor::zeros(other.value(i).shape()));
  }
  return out;
}

ParamSet ParamSet::join(const std::vector<std::pair<std::string, const ParamSet*>>& parts) {
  ParamSet out;
  for (const auto& [prefix, ps] : parts) {
    for (std::size_t i = 0; i < ps->size(); ++i) {
      out.add(prefix + ps->name(i), ps->value(i));
    }
  }
  return out;
}

ParamSet ParamSet::with_prefix_removed(const std::string& prefix) const {
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (names_[i].rfind(prefix, 0) == 0) {
      out.add(names_[i].substr(prefix.size()), values_[i]);
    }
  }
  return out;
}

double ParamSet::global_l2_norm() const {
  double ss = 0.0;
  for (const Tensor& t : values_) ss += K().dot(t.data(), t.data(), t.numel());
  return std::sqrt(ss);
}

ParamSet net_init(const NetSpec& spec, std::uint64_t seed, bool zero_final) {
  Rng rng(seed);
  ParamSet out;
  std::vector<std::size_t> widths;
  widths.push_back(spec.in_dim());
  for (std::size_t h : spec.hidden) widths.push_back(h);
  widths.push_back(spec.out_dim);

  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    Tensor w({fan_in, fan_out});
    Tensor b({fan_out});
    const bool last = (l + 2 == widths.size());
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.numel(); ++i) {
      w[i] = (last && zero_final) ? 0.0 : (2.0 * rng.uniform() - 1.0) * bound;
    }
    // biases start at zero
    out.add(layer_w(l), std::move(w));
    out.add(layer_b(l), std::move(b));
  }
  if (spec.cond_count > 0) {
    Tensor e({spec.cond_count, spec.cond_emb_dim});
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.cond_emb_dim));
    for (std::size_t i = 0; i < e.numel(); ++i) e[i] = (2.0 * rng.uniform() - 1.0) * bound;
    out.add("cond_embedding", std::move(e));
  }
  return out;
}

Tensor time_embedding(const NetSpec& spec, std::span<const int> ts) {
  const std::size_t d = spec.time_emb_dim;
  if (d % 2 != 0) throw ContractError("time_emb_dim must be even");
  Tensor out({ts.size(), d});
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double u = static_cast<double>(ts[i]) / static_cast<double>(spec.horizon);
    double* row = out.data() + i * d;
    double freq = 1.0;
    for (std::size_t k = 0; k < d / 2; ++k) {
      row[2 * k] = std::sin(std::numbers::pi * freq * u);
      row[2 * k + 1] = std::cos(std::numbers::pi * freq * u);
      freq *= 2.0;
    }
  }
  return out;
}

namespace {

Tensor assemble_inputs(const NetSpec& spec, const ParamSet& params, const Tensor& x,
                       std::span<const int> ts, std::span<const int> cs) {
  const std::size_t b = x.rows();
  if (x.cols() != spec.data_dim) {
    throw ContractError("net_forward: input width " + std::to_string(x.cols()) +
                        " != data_dim " + std::to_string(spec.data_dim));
  }
  if (ts.size() != b) throw ContractError("net_forward: ts size mismatch");
  Tensor temb = time_embedding(spec, ts);
  const bool cond = spec.cond_count > 0;
  if (cond && cs.size() != b) throw ContractError("net_forward: cs size mismatch");

  const std::size_t total = spec.in_dim();
  Tensor in({b, total});
  const Tensor* emb = cond ? &params.get("cond_embedding") : nullptr;
  for (std::size_t i = 0; i < b; ++i) {
    double* dst = in.data() + i * total;
    const double* xs = x.data() + i * spec.data_dim;
    for (std::size_t j = 0; j < spec.data_dim; ++j) dst[j] = xs[j];
    const double* te = temb.data() + i * spec.time_emb_dim;
    for (std::size_t j = 0; j < spec.time_emb_dim; ++j) dst[spec.data_dim + j] = te[j];
    if (cond) {
      const int c = cs[i];
      if (c < 0 || static_cast<std::size_t>(c) >= spec.cond_count) {
        throw ContractError("net_forward: condition id out of range");
      }
      const double* er = emb->data() + static_cast<std::size_t>(c) * spec.cond_emb_dim;
      double* cd = dst + spec.data_dim + spec.time_emb_dim;
      for (std::size_t j = 0; j < spec.cond_emb_dim; ++j) cd[j] = er[j];
    }
  }
  return in;
}

}  // namespace

Tensor net_forward(const NetSpec& spec, const ParamSet& params, const Tensor& x,
                   std::span<const int> ts, std::span<const int> cs) {
  Tensor h = assemble_inputs(spec, params, x, ts, cs);
  const std::size_t b = x.rows();
  const std::size_t n_layers = spec.n_layers();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Tensor& w = params.get(layer_w(l));
    const Tensor& bias = params.get(layer_b(l));
    Tensor y({b, w.cols()});
    K().gemm_nn(h.data(), w.data(), y.data(), b, w.rows(), w.cols(), false);
    for (std::size_t i = 0; i < b; ++i) {
      K().add(y.data() + i * w.cols(), bias.data(), y.data() + i * w.cols(), w.cols());
    }
    if (l + 1 < n_layers) {
      for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(y[i]);
    }
    h = std::move(y);
  }
  return h;
}

std::vector<Var> mount_params(Tape& tape, const ParamSet& params) {
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    leaves.push_back(tape.input(params.value(i), true, params.name(i)));
  }
  return leaves;
}

Var net_apply(Tape& tape, const NetSpec& spec, std::span<const Var> leaves,
              Var x, std::span<const int> ts, std::span<const int> cs) {
  const Tensor& xv = tape.val(x);
  if (xv.ndim() != 2 || xv.cols() != spec.data_dim) {
    throw ContractError("net_apply: input width mismatch");
  }
  const std::size_t expected = 2 * spec.n_layers() + (spec.cond_count > 0 ? 1 : 0);
  if (leaves.size() != expected) {
    throw ContractError("net_apply: expected " + std::to_string(expected) + " leaves");
  }
  std::vector<Var> parts{x, tape.constant(time_embedding(spec, ts))};
  if (spec.cond_count > 0) {
    std::vector<std::size_t> rows(cs.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (cs[i] < 0 || static_cast<std::size_t>(cs[i]) >= spec.cond_count) {
        throw ContractError("net_apply: condition id out of range");
      }
      rows[i] = static_cast<std::size_t>(cs[i]);
    }
    parts.push_back(tape.gather_rows(leaves[leaves.size() - 1], std::move(rows)));
  }
  Var h = tape.concat_cols(parts);
  const std::size_t n_layers = spec.n_layers();
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = tape.matmul(h, leaves[2 * l]);
    h = tape.add_rowvec(h, leaves[2 * l + 1]);
    if (l + 1 < n_layers) h = tape.tanh(h);
  }
  return h;
}

Tensor batch_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("batch_rows: empty");
  const std::size_t d = rows[0].numel();
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].numel() != d) throw ContractError("batch_rows: ragged rows");
    for (std::size_t j = 0; j < d; ++j) out.data()[i * d + j] = rows[i][j];
  }
  return out;
}

}  // namespace dag
