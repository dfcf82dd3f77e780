#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fgpl/diffcore/tape.hpp"
#include "fgpl/flowsde/sampler.hpp"
#include "fgpl/genmodel/flow_net.hpp"
#include "fgpl/rewards/components.hpp"

namespace fgpl::grpo {

using flow::NoiseSchedule;
using flow::Trajectory;
using gen::FlowNet;

// Grid index per group, stratified over the eligible set and rotated by the
// iteration counter: E[(floor(g·M/G) + iteration) mod M]. More groups than
// eligible indices needs `cycle`, in which case indices repeat.
std::vector<std::size_t> assign_isotemporal(std::size_t groups, const NoiseSchedule& schedule,
                                            std::size_t iteration, bool cycle = false);

// (R - mean) / std with the population std; all zeros when std < eps_std.
std::vector<double> compute_advantages(std::span<const double> rewards, double eps_std = 1e-8);

// Terminal reward; only ever sees x at t = 0.
using TerminalReward = std::function<rw::RewardBundle(int prompt, std::span<const double> x)>;

struct RolloutGroup {
  int prompt = 0;
  std::size_t index = 0;  // shared SDE grid index k
  std::vector<Trajectory> members;
  std::vector<rw::RewardBundle> rewards;
  std::vector<double> advantages;
};

// N isotemporal trajectories per group from the current model. Member i of
// group g draws from the stream (seed, tag, g, i).
std::vector<RolloutGroup> rollout_groups(const FlowNet& model, const NoiseSchedule& schedule,
                                         std::span<const int> prompts,
                                         std::span<const std::size_t> indices,
                                         std::size_t group_size, std::uint64_t seed,
                                         const std::string& tag);

// Scores the terminal states and standardizes within each group.
void score_groups(std::vector<RolloutGroup>& groups, const TerminalReward& reward,
                  double eps_std = 1e-8);

// log q_θ(x_{k+1} | x_k) of each trajectory's recorded stochastic transition,
// with the kernel mean re-derived from the current model. [n]
Var transition_logprob(Tape& tape, const FlowNet& model, const NoiseSchedule& schedule,
                       std::span<const Trajectory* const> trajectories);

// exp(logp_θ - logp_old) for one trajectory. Throws std::logic_error when the
// trajectory has no recorded stochastic step.
double policy_ratio(const FlowNet& model, const Trajectory& trajectory,
                    const NoiseSchedule& schedule);

struct Surrogate {
  Var loss;                 // -objective
  double objective = 0.0;
  double clip_fraction = 0.0;
  std::size_t skipped = 0;  // samples dropped for a non-finite ratio
};

// mean over members of min(r·Ã, clip(r, 1-ε, 1+ε)·Ã) with Ã = A / λ(t_k).
Surrogate grpo_surrogate(Tape& tape, const FlowNet& model, std::span<const RolloutGroup> groups,
                         double clip, const NoiseSchedule& schedule);

}  // namespace fgpl::grpo
