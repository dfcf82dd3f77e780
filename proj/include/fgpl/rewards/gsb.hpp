#pragma once

#include <functional>
#include <span>

#include "fgpl/diffcore/tensor.hpp"

namespace fgpl::rw {

struct Gsb {
  double good = 0.0;
  double same = 0.0;
  double bad = 0.0;
  std::size_t pairs = 0;

  double net() const { return good - bad; }
};

// Paired comparison: good when r_a - r_b > delta, bad when < -delta.
// Throws on length mismatch, empty input or negative delta.
Gsb gsb_compare(std::span<const double> reward_a, std::span<const double> reward_b, double delta);

using SampleReward = std::function<double(int prompt, std::span<const double> x)>;

// Scores both sample sets row by row with `reward`, then compares.
Gsb gsb_compare(const Tensor& samples_a, const Tensor& samples_b,
                std::span<const int> prompt_of_row, const SampleReward& reward, double delta);

}  // namespace fgpl::rw
