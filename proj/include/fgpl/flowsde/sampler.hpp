#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fgpl/diffcore/rng.hpp"
#include "fgpl/diffcore/tensor.hpp"
#include "fgpl/flowsde/kernels.hpp"

namespace fgpl::flow {

// Batched velocity field: x is [B, d] at a common time t; returns [B, d].
using VelocityFn = std::function<Tensor(const Tensor& x, double t)>;

struct SdeRecord {
  std::size_t index = 0;       // grid index k; the step goes t_k -> t_{k+1}
  TransitionKernel kernel_old;
  double logp_old = 0.0;
};

// One sampling path. states[k] is the state at t_k; states.back() is x at t=0.
struct Trajectory {
  int prompt = 0;
  std::vector<std::vector<double>> states;
  std::vector<SdeRecord> sde;  // ascending by index; size 1 in isotemporal mode

  bool isotemporal() const { return sde.size() == 1; }
  // Accessors for the single stochastic step; throw if not isotemporal.
  std::size_t sde_index() const;
  const TransitionKernel& kernel_old() const;
  double logp_old() const;
  const std::vector<double>& terminal() const { return states.back(); }
};

// Integrates a batch from the given initial states. Row b takes SDE steps at
// the grid indices in sde_steps[b] (each must be eligible) and ODE steps
// elsewhere. Stochastic increments for row b come from streams[b] in step
// order, so results do not depend on how rows are batched.
std::vector<Trajectory> integrate_batch(const VelocityFn& velocity, const NoiseSchedule& schedule,
                                        const Tensor& x_init, std::span<const int> prompts,
                                        std::span<const std::vector<std::size_t>> sde_steps,
                                        std::span<RngStream> streams);

// Draws x_1 ~ N(0, I) from each stream, then integrates as above.
std::vector<Trajectory> sample_mixed_batch(const VelocityFn& velocity,
                                           const NoiseSchedule& schedule, std::size_t dim,
                                           std::span<const int> prompts,
                                           std::span<const std::vector<std::size_t>> sde_steps,
                                           std::span<RngStream> streams);

// Isotemporal trajectory: one SDE step at sde_index, ODE everywhere else.
Trajectory sample_mixed_trajectory(const VelocityFn& velocity, int prompt,
                                   const NoiseSchedule& schedule, std::size_t sde_index,
                                   RngStream& stream, std::size_t dim);

// Deterministic ODE integration of a batch; returns the t=0 states.
Tensor sample_ode(const VelocityFn& velocity, const NoiseSchedule& schedule, Tensor x);

}  // namespace fgpl::flow
