#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fgpl/diffcore/tensor.hpp"

namespace fgpl {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t numel() const { return value().numel(); }
  double item() const { return value().item(); }
};

// Reverse-mode recording of a computation. Nodes are appended in evaluation
// order, so reverse iteration is a valid topological order for backprop.
//
// A tape built with record=false still evaluates every op but stores no
// backward closures; the values it produces are bit-identical to a recording
// tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const double> grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor t);
  // Leaf bound to a named parameter; its gradient is written back by backward().
  Var param(const ParamStore& store, const std::string& name);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Records an op result. `backward` is dropped unless the tape records and at
  // least one input needs a gradient.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var push(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Accumulates into the gradient buffer of node `v` (allocated on demand).
  std::vector<double>& grad_buffer(Var v);
  void accumulate(Var v, std::span<const double> g);

  // Reverse accumulation from a scalar output. Throws std::logic_error for a
  // non-scalar output or a non-recording tape.
  void backward(Var output);

  // Gradient of the last backward() with respect to node v (zeros if unreached).
  std::vector<double> grad(Var v) const;

  // Zeroes every gradient in `store`, then adds the gradients of the parameter
  // leaves recorded on this tape. Parameters absent from the tape keep zero.
  void write_grads(ParamStore& store) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    BackwardFn backward;
    std::string param;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool record_;
};

// backward() followed by write_grads(); the standard training-loop entry point.
void backward(Var output, ParamStore& store);

}  // namespace fgpl
