#include "fgpl/diffcore/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace fgpl {

void adam_step(ParamStore& store, AdamState& state) {
  for (const auto& [name, t] : store) {
    if (!t.grad) throw std::invalid_argument("adam_step: parameter '" + name + "' has no gradient");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : store) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.numel()) {
      m.assign(t.numel(), 0.0);
      v.assign(t.numel(), 0.0);
    }
    const auto& g = *t.grad;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.values[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace fgpl
