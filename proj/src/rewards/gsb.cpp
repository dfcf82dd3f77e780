#include "fgpl/rewards/gsb.hpp"

#include <stdexcept>
#include <vector>

namespace fgpl::rw {

Gsb gsb_compare(std::span<const double> reward_a, std::span<const double> reward_b, double delta) {
  if (reward_a.size() != reward_b.size()) throw std::invalid_argument("gsb_compare: length mismatch");
  if (reward_a.empty()) throw std::invalid_argument("gsb_compare: no pairs");
  if (!(delta >= 0.0)) throw std::invalid_argument("gsb_compare: delta must be nonnegative");
  std::size_t good = 0, bad = 0;
  for (std::size_t i = 0; i < reward_a.size(); ++i) {
    const double d = reward_a[i] - reward_b[i];
    good += d > delta;
    bad += d < -delta;
  }
  const double n = static_cast<double>(reward_a.size());
  Gsb g;
  g.pairs = reward_a.size();
  g.good = good / n;
  g.bad = bad / n;
  g.same = (g.pairs - good - bad) / n;
  return g;
}

Gsb gsb_compare(const Tensor& samples_a, const Tensor& samples_b,
                std::span<const int> prompt_of_row, const SampleReward& reward, double delta) {
  if (samples_a.shape != samples_b.shape || prompt_of_row.size() != samples_a.rows()) {
    throw std::invalid_argument("gsb_compare: sample sets are not paired");
  }
  const std::size_t d = samples_a.cols();
  std::vector<double> ra, rb;
  for (std::size_t r = 0; r < samples_a.rows(); ++r) {
    ra.push_back(reward(prompt_of_row[r], {&samples_a.values[r * d], d}));
    rb.push_back(reward(prompt_of_row[r], {&samples_b.values[r * d], d}));
  }
  return gsb_compare(ra, rb, delta);
}

}  // namespace fgpl::rw
