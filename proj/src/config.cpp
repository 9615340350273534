#include "dag/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dag/errors.hpp"
#include "dag/strfmt.hpp"

namespace dag {

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& origin, std::size_t line, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') fail(origin, line, "expected a number, got '" + v + "'");
  return x;
}

std::uint64_t parse_uint(const std::string& origin, std::size_t line, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    fail(origin, line, "expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* end = nullptr;
    const double x = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') {
      throw ConfigError("bad number in list: '" + item + "'");
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace

std::size_t RunConfig::horizon() const {
  if (task.horizon != 0) return task.horizon;
  return task.kind == "discrete" ? 5 : 20;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, lineno, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "task" && section != "reward" && section != "algorithm" &&
          section != "run") {
        fail(origin, lineno, "unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) fail(origin, lineno, "key outside any section");

    if (section == "task") {
      if (key == "kind") cfg.task.kind = value;
      else if (key == "dim") cfg.task.dim = parse_uint(origin, lineno, value);
      else if (key == "horizon") cfg.task.horizon = parse_uint(origin, lineno, value);
      else if (key == "schedule") cfg.task.schedule = value;
      else if (key == "dataset") cfg.task.dataset = value;
      else if (key == "conditions") cfg.task.conditions = parse_uint(origin, lineno, value);
      else if (key == "states") cfg.task.states = parse_uint(origin, lineno, value);
      else if (key == "stay_prob") cfg.task.stay_prob = parse_double(origin, lineno, value);
      else fail(origin, lineno, "unknown key '" + key + "' in [task]");
    } else if (section == "reward") {
      if (key == "id") cfg.reward.id = value;
      else if (key == "beta_max") cfg.reward.beta_max = parse_double(origin, lineno, value);
      else if (key == "anneal_fraction")
        cfg.reward.anneal_fraction = parse_double(origin, lineno, value);
      else if (key == "radius") cfg.reward.radius = parse_double(origin, lineno, value);
      else if (key == "sigma") cfg.reward.sigma = parse_double(origin, lineno, value);
      else if (key == "centers") cfg.reward.centers = value;
      else if (key == "weights") cfg.reward.weights = value;
      else if (key == "table") cfg.reward.table = value;
      else if (key == "classes") cfg.reward.classes = parse_uint(origin, lineno, value);
      else fail(origin, lineno, "unknown key '" + key + "' in [reward]");
    } else if (section == "algorithm") {
      if (key == "name") cfg.algorithm.name = value;
      else if (key == "learning_rate")
        cfg.algorithm.learning_rate = parse_double(origin, lineno, value);
      else if (key == "weight_decay")
        cfg.algorithm.weight_decay = parse_double(origin, lineno, value);
      else if (key == "clip_epsilon")
        cfg.algorithm.clip_epsilon = parse_double(origin, lineno, value);
      else if (key == "ppo_clip_epsilon")
        cfg.algorithm.ppo_clip_epsilon = parse_double(origin, lineno, value);
      else if (key == "kl_reg_coef")
        cfg.algorithm.kl_reg_coef = parse_double(origin, lineno, value);
      else if (key == "grad_clip_norm")
        cfg.algorithm.grad_clip_norm = parse_double(origin, lineno, value);
      else if (key == "rollouts_per_epoch")
        cfg.algorithm.rollouts_per_epoch = parse_uint(origin, lineno, value);
      else if (key == "opt_steps_per_epoch")
        cfg.algorithm.opt_steps_per_epoch = parse_uint(origin, lineno, value);
      else if (key == "epochs") cfg.algorithm.epochs = parse_uint(origin, lineno, value);
      else if (key == "kl_beta_scale") cfg.algorithm.kl_beta_scale = value;
      else if (key == "init_checkpoint") cfg.algorithm.init_checkpoint = value;
      else if (key == "pretrain_steps")
        cfg.algorithm.pretrain_steps = parse_uint(origin, lineno, value);
      else if (key == "pretrain_batch")
        cfg.algorithm.pretrain_batch = parse_uint(origin, lineno, value);
      else if (key == "pretrain_lr")
        cfg.algorithm.pretrain_lr = parse_double(origin, lineno, value);
      else fail(origin, lineno, "unknown key '" + key + "' in [algorithm]");
    } else {  // run
      if (key == "seed") cfg.run.seed = parse_uint(origin, lineno, value);
      else if (key == "out") cfg.run.out = value;
      else if (key == "eval_every") cfg.run.eval_every = parse_uint(origin, lineno, value);
      else if (key == "eval_samples")
        cfg.run.eval_samples = parse_uint(origin, lineno, value);
      else if (key == "hist_bins") cfg.run.hist_bins = parse_uint(origin, lineno, value);
      else if (key == "hist_range") cfg.run.hist_range = parse_double(origin, lineno, value);
      else fail(origin, lineno, "unknown key '" + key + "' in [run]");
    }
  }

  if (cfg.task.kind != "continuous" && cfg.task.kind != "discrete") {
    throw ConfigError(origin + ": task.kind must be continuous or discrete");
  }
  schedule_kind_from(cfg.task.schedule);
  algorithm_from(cfg.algorithm.name);
  if (cfg.reward.id != "gmm" && cfg.reward.id != "ring" && cfg.reward.id != "quadrant" &&
      cfg.reward.id != "table" && cfg.reward.id != "classifier") {
    throw ConfigError(origin + ": unknown reward id '" + cfg.reward.id + "'");
  }
  if (cfg.algorithm.kl_beta_scale != "none" && cfg.algorithm.kl_beta_scale != "final-beta") {
    throw ConfigError(origin + ": kl_beta_scale must be none or final-beta");
  }
  if (cfg.reward.beta_max < 0.0) throw ConfigError(origin + ": beta_max must be >= 0");
  if (!(cfg.reward.anneal_fraction > 0.0 && cfg.reward.anneal_fraction <= 1.0)) {
    throw ConfigError(origin + ": anneal_fraction must be in (0,1]");
  }
  if (!cfg.task.dataset.empty() && !std::filesystem::exists(cfg.task.dataset)) {
    throw ConfigError(origin + ": dataset file not found: " + cfg.task.dataset);
  }
  if (!cfg.algorithm.init_checkpoint.empty() &&
      !std::filesystem::exists(cfg.algorithm.init_checkpoint)) {
    throw ConfigError(origin + ": init_checkpoint not found: " +
                      cfg.algorithm.init_checkpoint);
  }
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

namespace {

// The sampler structure: what must match between a checkpoint and a config
// for parameters to be loadable. The reward is intentionally not part of it
// (pretraining is reward-free; alignment may retarget the same chain).
void dump_task(std::ostringstream& os, const RunConfig& c) {
  os << "[task]\n";
  os << "kind = " << c.task.kind << "\n";
  os << "dim = " << c.task.dim << "\n";
  os << "horizon = " << c.horizon() << "\n";
  os << "schedule = " << c.task.schedule << "\n";
  os << "dataset = " << c.task.dataset << "\n";
  os << "conditions = " << c.task.conditions << "\n";
  os << "states = " << c.task.states << "\n";
  os << "stay_prob = " << format_double(c.task.stay_prob) << "\n";
}

void dump_reward(std::ostringstream& os, const RunConfig& c) {
  os << "[reward]\n";
  os << "id = " << c.reward.id << "\n";
  os << "beta_max = " << format_double(c.reward.beta_max) << "\n";
  os << "anneal_fraction = " << format_double(c.reward.anneal_fraction) << "\n";
  os << "radius = " << format_double(c.reward.radius) << "\n";
  os << "sigma = " << format_double(c.reward.sigma) << "\n";
  os << "centers = " << c.reward.centers << "\n";
  os << "weights = " << c.reward.weights << "\n";
  os << "table = " << c.reward.table << "\n";
  os << "classes = " << c.reward.classes << "\n";
}

}  // namespace

std::string RunConfig::normalized_dump() const {
  std::ostringstream os;
  dump_task(os, *this);
  dump_reward(os, *this);
  os << "[algorithm]\n";
  os << "name = " << algorithm.name << "\n";
  os << "learning_rate = " << format_double(algorithm.learning_rate) << "\n";
  os << "weight_decay = " << format_double(algorithm.weight_decay) << "\n";
  os << "clip_epsilon = " << format_double(algorithm.clip_epsilon) << "\n";
  os << "ppo_clip_epsilon = " << format_double(algorithm.ppo_clip_epsilon) << "\n";
  os << "kl_reg_coef = " << format_double(algorithm.kl_reg_coef) << "\n";
  os << "grad_clip_norm = " << format_double(algorithm.grad_clip_norm) << "\n";
  os << "rollouts_per_epoch = " << algorithm.rollouts_per_epoch << "\n";
  os << "opt_steps_per_epoch = " << algorithm.opt_steps_per_epoch << "\n";
  os << "epochs = " << algorithm.epochs << "\n";
  os << "kl_beta_scale = " << algorithm.kl_beta_scale << "\n";
  os << "init_checkpoint = " << algorithm.init_checkpoint << "\n";
  os << "pretrain_steps = " << algorithm.pretrain_steps << "\n";
  os << "pretrain_batch = " << algorithm.pretrain_batch << "\n";
  os << "pretrain_lr = " << format_double(algorithm.pretrain_lr) << "\n";
  os << "[run]\n";
  os << "seed = " << run.seed << "\n";
  os << "out = " << run.out << "\n";
  os << "eval_every = " << run.eval_every << "\n";
  os << "eval_samples = " << run.eval_samples << "\n";
  os << "hist_bins = " << run.hist_bins << "\n";
  os << "hist_range = " << format_double(run.hist_range) << "\n";
  return os.str();
}

std::uint64_t RunConfig::config_hash() const { return fnv1a64(normalized_dump()); }

std::uint64_t RunConfig::semantic_hash() const {
  std::istringstream in(normalized_dump());
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("out = ", 0) == 0) continue;
    out << line << "\n";
  }
  return fnv1a64(out.str());
}

std::uint64_t RunConfig::task_hash() const {
  std::ostringstream os;
  dump_task(os, *this);
  return fnv1a64(os.str());
}

std::string RunConfig::task_label() const { return task.kind + ":" + reward.id; }

Model build_model(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.task.kind == "discrete") {
    return make_discrete_model(
        make_lazy_uniform_chain(cfg.task.states, cfg.horizon(), cfg.task.stay_prob));
  }
  return make_continuous_model(
      make_schedule(schedule_kind_from(cfg.task.schedule), cfg.horizon()), cfg.task.dim,
      cfg.task.conditions, seed);
}

RewardSpec build_reward(const RunConfig& cfg) {
  RewardSpec spec;
  if (cfg.reward.id == "gmm") {
    std::vector<std::array<double, 2>> centers;
    std::stringstream ss(cfg.reward.centers);
    std::string item;
    while (std::getline(ss, item, ';')) {
      std::vector<double> xy = parse_double_list(item);
      if (xy.size() != 2) throw ConfigError("gmm centers: expected x,y pairs");
      centers.push_back({xy[0], xy[1]});
    }
    spec = make_gmm_reward(std::move(centers), parse_double_list(cfg.reward.weights),
                           cfg.reward.sigma);
  } else if (cfg.reward.id == "ring") {
    spec = make_ring_reward(cfg.reward.radius);
  } else if (cfg.reward.id == "quadrant") {
    spec = make_quadrant_reward();
  } else if (cfg.reward.id == "table") {
    std::vector<double> table = cfg.reward.table == "auto"
                                    ? default_oracle_table(cfg.task.states)
                                    : parse_double_list(cfg.reward.table);
    if (table.size() != cfg.task.states) {
      throw ConfigError("reward table size must equal task.states");
    }
    spec = make_table_reward(std::move(table));
  } else if (cfg.reward.id == "classifier") {
    spec = make_classifier_reward(cfg.reward.classes, cfg.reward.radius);
  } else {
    throw ConfigError("unknown reward id: " + cfg.reward.id);
  }
  spec.beta_max = cfg.reward.beta_max;
  spec.anneal_fraction = cfg.reward.anneal_fraction;
  return spec;
}

AlignConfig build_align_config(const RunConfig& cfg) {
  AlignConfig a;
  a.algo = algorithm_from(cfg.algorithm.name);
  a.lr = cfg.algorithm.learning_rate;
  a.weight_decay = cfg.algorithm.weight_decay;
  a.clip_eps = cfg.algorithm.clip_epsilon;
  a.ppo_clip_eps = cfg.algorithm.ppo_clip_epsilon;
  a.kl_reg_coef = cfg.algorithm.kl_reg_coef;
  a.grad_clip_norm = cfg.algorithm.grad_clip_norm;
  a.rollouts_per_epoch = cfg.algorithm.rollouts_per_epoch;
  a.opt_steps_per_epoch = cfg.algorithm.opt_steps_per_epoch;
  a.epochs = cfg.algorithm.epochs;
  a.kl_scale_final_beta = cfg.algorithm.kl_beta_scale == "final-beta";
  return a;
}

}  // namespace dag
