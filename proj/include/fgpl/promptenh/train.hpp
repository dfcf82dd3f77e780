#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fgpl/flowsde/schedule.hpp"
#include "fgpl/promptenh/policy.hpp"
#include "fgpl/rewards/components.hpp"

namespace fgpl::pe {

// ODE samples from the frozen generator under modified conditioning.
// Initial noise is noise_scale · N(0, I) drawn from `stream`.
Tensor sample_conditioned(const gen::FlowNet& generator, const flow::NoiseSchedule& schedule,
                          const Conditioning& cond, std::size_t n, RngStream& stream);

struct PeWeights {
  double alignment = 0.5;
  double aesthetic = 0.3;
  double structure = 0.2;
};

struct Outcome {
  double alignment_z = 0.0;  // mean z-scored alignment against the original prompt
  double aesthetic_z = 0.0;  // mean z-scored video aesthetic
  double value = 0.0;        // weighted outcome, structure excluded
};

// Scores M generator samples under y's conditioning against prompt P's own
// target law. A y that is not well formed falls back to the raw user input.
// Throws std::out_of_range for unknown tokens.
Outcome pe_outcome_reward(const gen::FlowNet& generator, const flow::NoiseSchedule& schedule,
                          const ModifierVocab& vocab, const gen::PromptSet& prompts,
                          const rw::NormStats& stats, const PeWeights& weights, int prompt,
                          std::span<const int> y, std::size_t m, RngStream& stream,
                          double vagueness = 0.0);

struct PeConfig {
  std::size_t group_size = 8;
  double clip = 0.2;
  double beta_kl = 0.1;
  double lr = 1e-2;
  std::size_t iterations = 150;
  std::size_t samples = 16;    // generator draws per outcome reward
  double vagueness = 0.4;      // how terse the user inputs are
  double eps_std = 1e-8;
  PeWeights weights;

  void validate() const;
};

struct PeIterationStats {
  std::size_t iteration = 0;
  double mean_reward = 0.0;     // outcome + structure
  double mean_outcome = 0.0;
  double mean_alignment_z = 0.0;
  double mean_aesthetic_z = 0.0;
  double kl = 0.0;              // exact sequence KL to the reference, mean over prompts, before the update
  double kl_sampled = 0.0;      // the same estimated on this iteration's sequences
  double clip_fraction = 0.0;
  double structure_valid = 0.0;
  double grad_norm = 0.0;
};

struct PeResult {
  EnhancerPolicy policy;
  std::vector<PeIterationStats> history;
  double final_kl = 0.0;        // exact, mean over the training prompts
};

// Mean of expected_kl over the listed prompts.
double mean_expected_kl(const EnhancerPolicy& policy, const EnhancerPolicy& reference,
                        std::span<const int> prompt_ids);

using PeLogger = std::function<void(const PeIterationStats&)>;

struct PeSurrogate {
  Var loss;
  double objective = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
};

// -(mean min(r·A, clip(r)·A) - β·mean KL) over one group of sequences.
PeSurrogate pe_surrogate(Tape& tape, const EnhancerPolicy& policy, const EnhancerPolicy& reference,
                         std::span<const EnhancedPrompt> seqs, std::span<const double> advantages,
                         double clip, double beta_kl);

// GRPO over enhancer sequences with the generator frozen. The reference
// policy is the initial policy. Group members share generator noise so their
// outcomes differ only through their tokens. Throws std::runtime_error on a
// non-finite loss.
PeResult pe_grpo_train(const EnhancerPolicy& init, const gen::FlowNet& generator,
                       const flow::NoiseSchedule& schedule, const ModifierVocab& vocab,
                       const gen::PromptSet& prompts, std::span<const int> prompt_ids,
                       const rw::NormStats& stats, const PeConfig& config, std::uint64_t seed,
                       const PeLogger& log = {});

}  // namespace fgpl::pe
