#include "dag/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "dag/errors.hpp"

namespace dag {

namespace {
std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t p = 1;
  for (std::size_t d : s) p *= d;
  return p;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  data_.assign(product(shape_), 0.0);
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
  if (product(shape) != data.size()) {
    throw ContractError("Tensor::from: shape/data size mismatch");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::row(std::vector<double> data) {
  std::size_t n = data.size();
  return from({n}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw ContractError("Tensor::rows on rank-" + std::to_string(ndim()));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw ContractError("Tensor::cols on rank-" + std::to_string(ndim()));
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_[r * shape_[1] + c];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("Tensor::item on numel=" + std::to_string(numel()));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

}  // namespace dag
