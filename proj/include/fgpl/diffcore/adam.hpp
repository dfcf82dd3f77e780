#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fgpl/diffcore/tensor.hpp"

namespace fgpl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

// Bias-corrected Adam update over every parameter in the store. Every
// parameter must carry a gradient; the first one missing is named in the
// thrown std::invalid_argument.
void adam_step(ParamStore& store, AdamState& state);

}  // namespace fgpl
