#include "fgpl/diffcore/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fgpl {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape s) {
  const auto n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

std::size_t Tensor::rows() const { return shape.size() == 2 ? shape[0] : 1; }

std::size_t Tensor::cols() const { return shape.empty() ? 1 : shape.back(); }

double Tensor::item() const {
  if (!is_scalar()) {
    throw std::logic_error("item() on non-scalar tensor of shape " + shape_str(shape));
  }
  return values[0];
}

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = params_.emplace(name, std::move(t));
  if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [_, t] : params_) t.grad = std::vector<double>(t.numel(), 0.0);
}

void ParamStore::clear_grads() {
  for (auto& [_, t] : params_) t.grad.reset();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, t] : params_) {
    if (!t.grad) continue;
    for (double g : *t.grad) s += g * g;
  }
  return std::sqrt(s);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double c = max_norm / norm;
    for (auto& [_, t] : params_) {
      if (!t.grad) continue;
      for (double& g : *t.grad) g *= c;
    }
  }
  return norm;
}

std::size_t ParamStore::copy_matching(const ParamStore& other) {
  std::size_t copied = 0;
  for (auto& [name, t] : params_) {
    auto it = other.params_.find(name);
    if (it != other.params_.end() && it->second.shape == t.shape) {
      t.values = it->second.values;
      ++copied;
    }
  }
  return copied;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second == b->second)) return false;
  }
  return true;
}

}  // namespace fgpl
