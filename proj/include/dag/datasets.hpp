#pragma once

#include <string>
#include <vector>

#include "dag/tensor.hpp"

namespace dag {

struct Dataset {
  Tensor x;                 // [N, d]
  std::vector<int> conds;   // empty when unconditional
};

// Plain text, one sample per line: comma-separated floats plus an optional
// trailing integer condition column.
Dataset load_dataset(const std::string& path, std::size_t dim);

// Classic 2D toy: 8 tight modes on a circle. When n_conditions > 0, each
// sample carries its mode index modulo n_conditions as the condition id.
void write_eight_gaussians(const std::string& path, std::size_t n, std::uint64_t seed,
                           double radius = 1.8, double noise = 0.05,
                           std::size_t n_conditions = 0);

}  // namespace dag
