#include "dag/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dag/errors.hpp"

namespace dag {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'G', 'C', 'K', 'P', 'T', '1'};

class Writer {
public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw ContractError("cannot open checkpoint for writing: " + path);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u64(t.ndim());
    for (std::size_t d : t.shape()) u64(d);
    for (std::size_t i = 0; i < t.numel(); ++i) f64(t[i]);
  }
  void params(const ParamSet& p, const std::string& prefix) {
    u64(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      str(prefix + p.name(i));
      tensor(p.value(i));
    }
  }
  void raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  bool ok() const { return static_cast<bool>(out_); }

private:
  template <typename T>
  void le(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    raw(buf, sizeof(T));
  }
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw ContractError("cannot open checkpoint: " + path);
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) corrupt("oversized string");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  Tensor tensor() {
    const std::uint64_t nd = u64();
    if (nd > 4) corrupt("oversized rank");
    std::vector<std::size_t> shape(nd);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = u64();
      numel *= d;
    }
    if (numel > (1u << 26)) corrupt("oversized tensor");
    std::vector<double> data(numel);
    for (auto& v : data) v = f64();
    return Tensor::from(std::move(shape), std::move(data));
  }
  ParamSet params(const std::string& prefix) {
    const std::uint64_t n = u64();
    if (n > 4096) corrupt("oversized param set");
    ParamSet p;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = str();
      if (name.rfind(prefix, 0) != 0) corrupt("parameter prefix mismatch: " + name);
      p.add(name.substr(prefix.size()), tensor());
    }
    return p;
  }
  void raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) corrupt("truncated file");
  }
  [[noreturn]] void corrupt(const std::string& why) {
    throw ContractError("corrupt checkpoint " + path_ + ": " + why);
  }

private:
  template <typename T>
  T le() {
    unsigned char buf[sizeof(T)];
    raw(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(buf[i]) << (8 * i);
    }
    return v;
  }
  std::ifstream in_;
  std::string path_;
};

void write_opt(Writer& w, const OptimizerState& o, const std::string& prefix) {
  w.f64(o.cfg.lr);
  w.f64(o.cfg.beta1);
  w.f64(o.cfg.beta2);
  w.f64(o.cfg.eps);
  w.f64(o.cfg.weight_decay);
  w.u64(o.step);
  w.params(o.m, prefix + ".m.");
  w.params(o.v, prefix + ".v.");
}

OptimizerState read_opt(Reader& r, const std::string& prefix) {
  OptimizerState o;
  o.cfg.lr = r.f64();
  o.cfg.beta1 = r.f64();
  o.cfg.beta2 = r.f64();
  o.cfg.eps = r.f64();
  o.cfg.weight_decay = r.f64();
  o.step = r.u64();
  o.m = r.params(prefix + ".m.");
  o.v = r.params(prefix + ".v.");
  return o;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.raw(kMagic, sizeof(kMagic));
    w.u32(ckpt.format_version);
    w.u64(ckpt.config_hash);
    w.u64(ckpt.task_hash);
    w.u8(static_cast<std::uint8_t>(ckpt.stage));
    const Model& m = ckpt.state.model;
    w.u8(m.kind == ChainKind::Continuous ? 0 : 1);
    if (m.kind == ChainKind::Continuous) {
      w.u64(m.sched.horizon);
      for (double a : m.sched.alpha) w.f64(a);
      for (double s : m.sched.sigma) w.f64(s);
      for (const NetSpec* spec : {&m.policy_spec, &m.flow_spec}) {
        w.u64(spec->data_dim);
        w.u64(spec->out_dim);
        w.u64(spec->time_emb_dim);
        w.u64(spec->horizon);
        w.u64(spec->cond_count);
        w.u64(spec->cond_emb_dim);
        w.u64(spec->hidden.size());
        for (std::size_t h : spec->hidden) w.u64(h);
      }
    } else {
      w.u64(m.chain.n_states);
      w.u64(m.chain.horizon);
    }
    w.u64(ckpt.state.epoch);
    w.u64(ckpt.state.global_step);
    w.u64(m.version);
    for (std::uint64_t word : ckpt.state.rng.state()) w.u64(word);
    w.params(m.theta, "theta.");
    w.params(m.phi, "phi.");
    write_opt(w, ckpt.state.opt_theta, "opt_theta");
    write_opt(w, ckpt.state.opt_phi, "opt_phi");
    if (!w.ok()) throw ContractError("checkpoint write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path, const Model& expected) {
  Reader r(path);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.corrupt("bad magic");
  Checkpoint ckpt;
  ckpt.format_version = r.u32();
  if (ckpt.format_version != 1) r.corrupt("unsupported format version");
  ckpt.config_hash = r.u64();
  ckpt.task_hash = r.u64();
  ckpt.stage = static_cast<RunStage>(r.u8());

  Model m = expected;  // structure from the config; parameters replaced below
  const std::uint8_t kind = r.u8();
  if ((kind == 0) != (m.kind == ChainKind::Continuous)) r.corrupt("chain kind mismatch");
  if (m.kind == ChainKind::Continuous) {
    const std::uint64_t T = r.u64();
    if (T != m.sched.horizon) r.corrupt("schedule horizon mismatch");
    for (double a : m.sched.alpha) {
      if (r.f64() != a) r.corrupt("schedule alpha mismatch");
    }
    for (double s : m.sched.sigma) {
      if (r.f64() != s) r.corrupt("schedule sigma mismatch");
    }
    for (const NetSpec* spec : {&m.policy_spec, &m.flow_spec}) {
      bool ok = r.u64() == spec->data_dim && r.u64() == spec->out_dim &&
                r.u64() == spec->time_emb_dim && r.u64() == spec->horizon &&
                r.u64() == spec->cond_count && r.u64() == spec->cond_emb_dim;
      const std::uint64_t nh = r.u64();
      ok = ok && nh == spec->hidden.size();
      if (!ok) r.corrupt("architecture descriptor mismatch");
      for (std::size_t h : spec->hidden) {
        if (r.u64() != h) r.corrupt("architecture width mismatch");
      }
    }
  } else {
    if (r.u64() != m.chain.n_states || r.u64() != m.chain.horizon) {
      r.corrupt("chain descriptor mismatch");
    }
  }
  ckpt.state.epoch = r.u64();
  ckpt.state.global_step = r.u64();
  m.version = r.u64();
  std::array<std::uint64_t, 4> rng_state;
  for (auto& word : rng_state) word = r.u64();
  ckpt.state.rng.set_state(rng_state);
  m.theta = r.params("theta.");
  m.phi = r.params("phi.");
  ckpt.state.opt_theta = read_opt(r, "opt_theta");
  ckpt.state.opt_phi = read_opt(r, "opt_phi");
  ckpt.state.model = std::move(m);
  return ckpt;
}

}  // namespace dag
