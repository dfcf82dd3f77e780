#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fgpl/diffcore/adam.hpp"
#include "fgpl/flowsde/schedule.hpp"
#include "fgpl/genmodel/flow_net.hpp"
#include "fgpl/genmodel/prompts.hpp"

namespace fgpl::gen {

// Thrown when a loss becomes non-finite; carries the step for diagnostics.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& stage, std::size_t step, double loss);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<double> x;           // [N, dim]
  std::vector<int> prompts;        // [N]
  std::vector<char> corrupted;     // [N]

  std::size_t size() const { return prompts.size(); }
  std::span<const double> row(std::size_t i) const { return {&x[i * dim], dim}; }
};

// per_prompt clean-or-corrupted samples for every prompt; a `corruption`
// fraction is replaced by draws from a broad N(0, distractor_std² I).
Dataset generate_dataset(const PromptSet& prompts, std::size_t per_prompt, double corruption,
                         RngStream& rng, double distractor_std = 3.0);
// Samples of curated prompts with corrupted rows removed. Throws if empty.
Dataset curated_subset(const Dataset& data, const PromptSet& prompts);

// Rectified-flow regression: mean ‖v_θ((1-t)x₀ + tε, t, c) - (ε - x₀)‖² with
// t ~ U(0, 1), ε ~ N(0, I). Returns the scalar node. Throws on an empty batch.
Var flow_matching_loss(Tape& tape, const FlowNet& model, const Tensor& x0,
                       std::span<const int> prompts, RngStream& rng);

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 256;
  double lr = 2e-3;
  double grad_clip = 5.0;
  std::size_t log_every = 100;
};

struct TrainPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

using TrainLogger = std::function<void(const TrainPoint&)>;

// Minibatch Adam on flow_matching_loss. Minibatches and noise derive from
// (seed, tag, step). Throws TrainingDiverged on a non-finite loss.
void train_flow_matching(FlowNet& model, const Dataset& data, const TrainConfig& config,
                         std::uint64_t seed, const std::string& tag,
                         const TrainLogger& log = {});

// Fresh model trained on the full (noisy) dataset.
FlowNet pretrain(const FlowNetConfig& net, const Dataset& data, const TrainConfig& config,
                 std::uint64_t seed, const TrainLogger& log = {});
// Continues training a copy of `pretrained` on the curated subset.
FlowNet sft(const FlowNet& pretrained, const Dataset& data, const PromptSet& prompts,
            const TrainConfig& config, std::uint64_t seed, const TrainLogger& log = {});

// Terminal ODE samples, n per listed prompt, noise from (seed, tag, prompt).
// Rows are grouped by prompt in the order given.
Tensor sample_prompts(const FlowNet& model, const flow::NoiseSchedule& schedule,
                      std::span<const int> prompts, std::size_t n, std::uint64_t seed,
                      const std::string& tag);

// Fraction of samples within Mahalanobis distance 3 of a mode of their
// prompt's law. Sequence prompts are scored frame by frame.
double validity_of(const Tensor& samples, std::span<const int> prompt_of_row,
                   const PromptSet& prompts);
// validity_of on n fresh samples per prompt. Requires n >= 100.
double validity_rate(const FlowNet& model, const PromptSet& prompts,
                     std::span<const int> prompt_ids, std::size_t n,
                     const flow::NoiseSchedule& schedule, std::uint64_t seed);

// Fraction of draws for prompt i whose log-density under law i exceeds that
// under every other prompt's law.
double conditioning_accuracy(const Tensor& samples, std::span<const int> prompt_of_row,
                             const PromptSet& prompts);

// Mean per-frame deviation of sequences from their anchored dynamics.
double mean_dynamics_deviation(const Tensor& samples, std::span<const int> prompt_of_row,
                               const PromptSet& prompts);

}  // namespace fgpl::gen
