#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fgpl/diffcore/rng.hpp"
#include "fgpl/diffcore/tape.hpp"
#include "fgpl/promptenh/vocab.hpp"

namespace fgpl::pe {

struct EnhancerConfig {
  std::size_t num_prompts = 4;
  std::size_t vocab_size = 7;
  std::size_t max_len = 4;
  std::size_t ctx_dim = 8;
  std::size_t pos_dim = 8;
  std::size_t hidden = 32;
};

// Autoregressive categorical policy over modifier tokens. Per position the
// logits come from an MLP over [prompt embedding, position embedding,
// multi-hot of tokens already emitted].
class EnhancerPolicy {
 public:
  EnhancerPolicy(EnhancerConfig config, std::uint64_t seed);
  EnhancerPolicy(EnhancerConfig config, ParamStore params);

  const EnhancerConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Logits for rows (prompt, position, prefix). prefixes[r] holds the tokens
  // emitted before position positions[r].
  Var logits(Tape& tape, std::span<const int> prompts, std::span<const int> positions,
             std::span<const std::vector<int>> prefixes) const;
  // Log-probabilities over the vocabulary after `prefix`.
  std::vector<double> next_log_probs(int prompt, std::span<const int> prefix) const;

 private:
  void check_params() const;

  EnhancerConfig cfg_;
  ParamStore params_;
};

struct EnhancedPrompt {
  int prompt = 0;
  std::vector<int> tokens;  // realized tokens, END included when emitted
  double logp = 0.0;
  bool structure_valid = false;
};

// Samples until END or max_len tokens.
EnhancedPrompt sample_enhanced(const EnhancerPolicy& policy, int prompt, RngStream& stream);
// Highest-probability token at every position.
EnhancedPrompt greedy_enhanced(const EnhancerPolicy& policy, int prompt);

// Σ log π(y_i | prefix) over the realized tokens, scalar-valued.
double sequence_logprob(const EnhancerPolicy& policy, int prompt, std::span<const int> y);
// Differentiable version for a batch of sequences. [S]
Var sequence_logprob(Tape& tape, const EnhancerPolicy& policy,
                     std::span<const EnhancedPrompt> seqs);

// Non-empty, ends with END, no repeated modifier and no early END.
bool well_formed(std::span<const int> y);
// 1 when 1 <= |y| <= max_len, no repeated non-END token, and y ends with END.
double structure_reward(std::span<const int> y, std::size_t max_len);
// 1 minus 0.25 per violated rule (length, each repeat, missing END), floored at 0.
double structure_reward_graded(std::span<const int> y, std::size_t max_len);

// Exact KL(p || q) of two categorical distributions given as logits.
double categorical_kl(std::span<const double> logits_p, std::span<const double> logits_q);

// Σ over realized positions of KL(π_θ(·|prefix) || π_ref(·|prefix)).
double kl_term(const EnhancerPolicy& policy, const EnhancerPolicy& reference, int prompt,
               std::span<const int> y);
// Exact KL between the sequence distributions of policy and reference for
// prompt P, by enumerating every prefix.
double expected_kl(const EnhancerPolicy& policy, const EnhancerPolicy& reference, int prompt);

// Differentiable per-sequence KL. [S]
Var kl_term(Tape& tape, const EnhancerPolicy& policy, const EnhancerPolicy& reference,
            std::span<const EnhancedPrompt> seqs);

}  // namespace fgpl::pe
