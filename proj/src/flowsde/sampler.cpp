#include "fgpl/flowsde/sampler.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fgpl::flow {
namespace {

const SdeRecord& single(const Trajectory& tr) {
  if (tr.sde.size() != 1) {
    throw std::logic_error("trajectory has " + std::to_string(tr.sde.size()) +
                           " stochastic steps; expected exactly one");
  }
  return tr.sde.front();
}

}  // namespace

std::size_t Trajectory::sde_index() const { return single(*this).index; }
const TransitionKernel& Trajectory::kernel_old() const { return single(*this).kernel_old; }
double Trajectory::logp_old() const { return single(*this).logp_old; }

std::vector<Trajectory> integrate_batch(const VelocityFn& velocity, const NoiseSchedule& schedule,
                                        const Tensor& x_init, std::span<const int> prompts,
                                        std::span<const std::vector<std::size_t>> sde_steps,
                                        std::span<RngStream> streams) {
  schedule.validate();
  const std::size_t batch = x_init.rows();
  const std::size_t dim = x_init.cols();
  if (prompts.size() != batch || sde_steps.size() != batch || streams.size() != batch) {
    throw std::invalid_argument("integrate_batch: per-row inputs must match the batch size");
  }
  // mark[b][k] = step k of row b is stochastic
  std::vector<std::vector<char>> mark(batch, std::vector<char>(schedule.steps, 0));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k : sde_steps[b]) {
      if (!schedule.sde_eligible(k)) {
        throw std::out_of_range("grid index " + std::to_string(k) + " (t=" +
                                std::to_string(schedule.time(k)) + ") is not SDE-eligible");
      }
      mark[b][k] = 1;
    }
  }

  std::vector<Trajectory> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    out[b].prompt = prompts[b];
    out[b].states.reserve(schedule.steps + 1);
    out[b].states.emplace_back(x_init.values.begin() + b * dim,
                               x_init.values.begin() + (b + 1) * dim);
  }
  Tensor x = x_init;
  const double dt = schedule.dt();
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    const double t = schedule.time(k);
    const Tensor v = velocity(x, t);
    for (std::size_t b = 0; b < batch; ++b) {
      std::span<const double> xr(&x.values[b * dim], dim);
      std::span<const double> vr(&v.values[b * dim], dim);
      std::vector<double> next;
      if (mark[b][k]) {
        const auto z = streams[b].gaussian(dim);
        SdeStep st = sde_step(schedule, xr, t, vr, z);
        const double lp = transition_logprob(st.kernel, st.next);
        out[b].sde.push_back(SdeRecord{k, std::move(st.kernel), lp});
        next = std::move(st.next);
      } else {
        next = ode_step(xr, dt, vr);
      }
      std::copy(next.begin(), next.end(), x.values.begin() + b * dim);
      out[b].states.push_back(std::move(next));
    }
  }
  return out;
}

std::vector<Trajectory> sample_mixed_batch(const VelocityFn& velocity,
                                           const NoiseSchedule& schedule, std::size_t dim,
                                           std::span<const int> prompts,
                                           std::span<const std::vector<std::size_t>> sde_steps,
                                           std::span<RngStream> streams) {
  Tensor x = Tensor::zeros({prompts.size(), dim});
  for (std::size_t b = 0; b < prompts.size() && b < streams.size(); ++b) {
    streams[b].fill_gaussian(std::span<double>(&x.values[b * dim], dim));
  }
  return integrate_batch(velocity, schedule, x, prompts, sde_steps, streams);
}

Trajectory sample_mixed_trajectory(const VelocityFn& velocity, int prompt,
                                   const NoiseSchedule& schedule, std::size_t sde_index,
                                   RngStream& stream, std::size_t dim) {
  const int prompts[] = {prompt};
  const std::vector<std::size_t> steps[] = {{sde_index}};
  return std::move(sample_mixed_batch(velocity, schedule, dim, prompts, steps,
                                      std::span<RngStream>(&stream, 1))
                       .front());
}

Tensor sample_ode(const VelocityFn& velocity, const NoiseSchedule& schedule, Tensor x) {
  const double dt = schedule.dt();
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    const Tensor v = velocity(x, schedule.time(k));
    for (std::size_t i = 0; i < x.numel(); ++i) x.values[i] -= dt * v.values[i];
  }
  return x;
}

}  // namespace fgpl::flow
