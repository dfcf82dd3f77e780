#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fgpl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. A gradient buffer, when present, has the
// same length as the values.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  // Leading dimension for rank-2 tensors, 1 otherwise.
  std::size_t rows() const;
  // Trailing dimension.
  std::size_t cols() const;
  bool is_scalar() const { return values.size() == 1 && shape_numel(shape) == 1; }
  double item() const;

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool operator==(const Tensor& other) const {
    return shape == other.shape && values == other.values;
  }
};

// Named parameter tensors, iterated in lexicographic order of names.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  Tensor& add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  void erase(const std::string& name) { params_.erase(name); }

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  std::size_t total_numel() const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  void zero_grads();
  void clear_grads();
  double grad_norm() const;
  // Rescales gradients so that their global norm is at most max_norm.
  // Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  // Copies every tensor of `other` whose name and shape match an entry here.
  // Returns the number of tensors copied.
  std::size_t copy_matching(const ParamStore& other);

  // Values-only equality (grads ignored).
  bool same_values(const ParamStore& other) const;

 private:
  Map params_;
};

}  // namespace fgpl
