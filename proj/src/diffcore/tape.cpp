#include "fgpl/diffcore/tape.hpp"

#include <stdexcept>

namespace fgpl {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor t) {
  t.grad.reset();
  nodes_.push_back(Node{std::move(t), {}, {}, {}, false});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  Tensor t = store.get(name);
  t.grad.reset();
  nodes_.push_back(Node{std::move(t), {}, {}, name, record_});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Var Tape::push(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) {
      if (in.tape != this) throw std::logic_error("op mixes vars from different tapes");
      needs = needs || nodes_[in.id].needs_grad;
    }
  }
  Node node{std::move(value), {}, {}, {}, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

void Tape::accumulate(Var v, std::span<const double> g) {
  if (!nodes_[v.id].needs_grad) return;
  auto& buf = grad_buffer(v);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Tape::backward(Var output) {
  if (!record_) throw std::logic_error("backward() on a non-recording tape");
  if (!value(output).is_scalar()) {
    throw std::logic_error("backward() requires a scalar output, got shape " +
                           shape_str(value(output).shape));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[output.id].needs_grad) return;
  grad_buffer(output)[0] = 1.0;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // The closure may append to other nodes' buffers but never to this one.
    const std::vector<double> g = n.grad;
    n.backward(*this, g);
  }
}

std::vector<double> Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return std::vector<double>(n.value.numel(), 0.0);
  return n.grad;
}

void Tape::write_grads(ParamStore& store) const {
  store.zero_grads();
  for (const Node& n : nodes_) {
    if (n.param.empty() || n.grad.empty()) continue;
    auto& g = *store.get(n.param).grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

void backward(Var output, ParamStore& store) {
  output.tape->backward(output);
  output.tape->write_grads(store);
}

}  // namespace fgpl
