#include "fgpl/flowsde/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fgpl::flow {

std::vector<double> ode_step(std::span<const double> x, double dt, std::span<const double> v) {
  if (x.size() != v.size()) throw std::invalid_argument("ode_step: dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - dt * v[i];
  return out;
}

TransitionKernel sde_kernel(std::span<const double> x, double t, double dt, double sigma_t,
                            std::span<const double> v) {
  if (x.size() != v.size()) throw std::invalid_argument("sde_kernel: dimension mismatch");
  const double c = sigma_t * sigma_t / (2.0 * t);
  TransitionKernel k;
  k.mean.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    k.mean[i] = x[i] - dt * (v[i] + c * (x[i] + (1.0 - t) * v[i]));
  }
  k.std = sigma_t * std::sqrt(dt);
  return k;
}

SdeStep sde_step(const NoiseSchedule& schedule, std::span<const double> x, double t,
                 std::span<const double> v, std::span<const double> z) {
  const double s = sigma(schedule, t);
  if (z.size() != x.size()) throw std::invalid_argument("sde_step: noise dimension mismatch");
  SdeStep out;
  out.kernel = sde_kernel(x, t, schedule.dt(), s, v);
  out.next.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.next[i] = out.kernel.mean[i] + out.kernel.std * z[i];
  return out;
}

double gaussian_logprob_coeff(double std) { return -0.5 / (std * std); }

double gaussian_logprob_const(double std, std::size_t dim) {
  const double d = static_cast<double>(dim);
  return -d * std::log(std) - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

double gaussian_logprob_from_sqdist(double sqdist, double std, std::size_t dim) {
  return sqdist * gaussian_logprob_coeff(std) + gaussian_logprob_const(std, dim);
}

double transition_logprob(const TransitionKernel& kernel, std::span<const double> x_next) {
  if (!(kernel.std > 0.0)) throw std::invalid_argument("transition_logprob: std must be positive");
  if (kernel.mean.size() != x_next.size()) {
    throw std::invalid_argument("transition_logprob: dimension mismatch");
  }
  double q = 0.0;
  for (std::size_t i = 0; i < x_next.size(); ++i) {
    const double d = x_next[i] - kernel.mean[i];
    q += d * d;
  }
  return gaussian_logprob_from_sqdist(q, kernel.std, x_next.size());
}

}  // namespace fgpl::flow
