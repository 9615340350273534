#include "dag/datasets.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dag/errors.hpp"
#include "dag/rng.hpp"
#include "dag/strfmt.hpp"

namespace dag {

Dataset load_dataset(const std::string& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open dataset: " + path);
  std::vector<double> values;
  std::vector<int> conds;
  bool has_cond = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string item;
    std::vector<std::string> cells;
    while (std::getline(ss, item, ',')) cells.push_back(item);
    if (cells.size() != dim && cells.size() != dim + 1) {
      throw ContractError(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(dim) + " floats (+ optional condition)");
    }
    const bool row_has_cond = cells.size() == dim + 1;
    if (lineno == 1) {
      has_cond = row_has_cond;
    } else if (row_has_cond != has_cond) {
      throw ContractError(path + ":" + std::to_string(lineno) +
                          ": inconsistent condition column");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      char* end = nullptr;
      const double v = std::strtod(cells[j].c_str(), &end);
      if (end == cells[j].c_str()) {
        throw ContractError(path + ":" + std::to_string(lineno) + ": bad float");
      }
      values.push_back(v);
    }
    if (has_cond) conds.push_back(std::atoi(cells[dim].c_str()));
  }
  if (values.empty()) throw ContractError("dataset is empty: " + path);
  Dataset d;
  const std::size_t n = values.size() / dim;
  d.x = Tensor::from({n, dim}, std::move(values));
  d.conds = std::move(conds);
  return d;
}

void write_eight_gaussians(const std::string& path, std::size_t n, std::uint64_t seed,
                           double radius, double noise, std::size_t n_conditions) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write dataset: " + path);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t mode = rng.uniform_index(8);
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(mode) / 8.0;
    const double x = radius * std::cos(ang) + noise * rng.normal();
    const double y = radius * std::sin(ang) + noise * rng.normal();
    out << format_double(x) << "," << format_double(y);
    if (n_conditions > 0) out << "," << (mode % n_conditions);
    out << "\n";
  }
}

}  // namespace dag
