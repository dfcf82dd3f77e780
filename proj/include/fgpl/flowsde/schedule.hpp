#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fgpl::flow {

// Uniform descending grid t_k = 1 - k/T, k = 0..T. A step "at index k" moves
// the state from t_k to t_{k+1}.
struct NoiseSchedule {
  std::size_t steps = 25;
  double eta = 0.7;
  double t_min = 0.04;
  double t_max = 0.96;

  void validate() const;
  double dt() const { return 1.0 / static_cast<double>(steps); }
  double time(std::size_t k) const {
    return 1.0 - static_cast<double>(k) / static_cast<double>(steps);
  }
  bool sde_eligible(std::size_t k) const;
  // Grid indices whose step may be stochastic, ascending.
  std::vector<std::size_t> eligible_indices() const;
};

// σ_t = η·sqrt(t / (1 - t)). Throws std::domain_error outside [t_min, t_max].
double sigma(const NoiseSchedule& schedule, double t);

// Temporal gradient rectification factor
//   λ(t) = √Δt / σ_t + σ_t·√Δt·(1 - t) / (2t).
double lambda_rect(double t, double dt, double sigma_t);

}  // namespace fgpl::flow
