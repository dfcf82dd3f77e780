#pragma once

#include <span>
#include <vector>

#include "fgpl/flowsde/schedule.hpp"

namespace fgpl::flow {

// Isotropic Gaussian transition density q(x_next | x_t).
struct TransitionKernel {
  std::vector<double> mean;
  double std = 0.0;
};

// Euler step of the probability-flow ODE in rectified-flow form: x - Δt·v.
std::vector<double> ode_step(std::span<const double> x, double dt, std::span<const double> v);

// Mean and std of one reverse-time SDE step from time t:
//   μ = x - Δt·[v + σ_t²/(2t)·(x + (1 - t)·v)],  std = σ_t·√Δt.
// The bracket uses the score identity ∇log q_t(x) = -(x + (1 - t)v)/t.
TransitionKernel sde_kernel(std::span<const double> x, double t, double dt, double sigma_t,
                            std::span<const double> v);

struct SdeStep {
  std::vector<double> next;
  TransitionKernel kernel;
};

// Stochastic step at grid time t; next = μ + σ_t·√Δt·z.
// Throws std::domain_error if t lies outside the schedule's SDE window.
SdeStep sde_step(const NoiseSchedule& schedule, std::span<const double> x, double t,
                 std::span<const double> v, std::span<const double> z);

// Log-density of x_next under the kernel. Throws std::invalid_argument for a
// non-positive std or mismatched dimensions.
double transition_logprob(const TransitionKernel& kernel, std::span<const double> x_next);

// Same arithmetic as transition_logprob, from a squared distance. Shared with
// the differentiable ratio path so both give bit-identical values.
double gaussian_logprob_from_sqdist(double sqdist, double std, std::size_t dim);
double gaussian_logprob_coeff(double std);
double gaussian_logprob_const(double std, std::size_t dim);

}  // namespace fgpl::flow
