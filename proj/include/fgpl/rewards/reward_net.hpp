#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fgpl/diffcore/tape.hpp"
#include "fgpl/rewards/components.hpp"

namespace fgpl::rw {

struct RewardNetConfig {
  std::size_t state_dim = 2;
  std::size_t num_prompts = 4;
  std::size_t prompt_dim = 8;
  std::size_t hidden = 32;
};

// Learned reward: encoder E over [x, prompt embedding] (two layers), head f
// emitting (score mean, log-uncertainty).
class RewardNet {
 public:
  RewardNet(RewardNetConfig config, std::uint64_t seed);
  RewardNet(RewardNetConfig config, ParamStore params);

  const RewardNetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // [B, 2]: column 0 is the score, column 1 the log-uncertainty.
  Var forward(Tape& tape, Var x, std::span<const int> prompts) const;

  struct Output {
    double score;
    double uncertainty;  // exp(log-uncertainty), always > 0
  };
  std::vector<Output> predict(const Tensor& x, std::span<const int> prompts) const;
  double score(int prompt, std::span<const double> x) const;

 private:
  void check_params() const;

  RewardNetConfig cfg_;
  ParamStore params_;
};

// Variance-normalized Bradley-Terry loss, averaged over the batch:
//   -log σ((r_pref - r_other) / sqrt(u_pref² + u_other²)).
// out_pref and out_other are forward() outputs for matching rows.
Var rank_loss(Var out_pref, Var out_other);

struct PreferencePair {
  int prompt = 0;
  std::vector<double> a;
  std::vector<double> b;
  int preferred = 0;          // 0: a, 1: b (possibly label-noised)
  int oracle_preferred = 0;   // noiseless analytic ordering
};

struct PreferenceConfig {
  std::size_t pairs = 4000;
  double label_noise = 0.1;
  double max_jitter = 1.5;    // extra isotropic noise std drawn from U(0, max_jitter)
};

// Pairs of perturbed target samples labelled by the analytic aggregate.
std::vector<PreferencePair> make_preferences(const PromptSet& prompts,
                                             const RewardWeights& weights,
                                             const PreferenceConfig& config, std::uint64_t seed);

struct RewardTrainConfig {
  std::size_t steps = 1500;
  std::size_t batch = 128;
  double lr = 3e-3;
  double holdout = 0.2;
};

struct RewardTrainReport {
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;          // against the stored labels
  double heldout_oracle_agreement = 0.0;  // against the noiseless ordering
  double final_loss = 0.0;
};

// Fraction of pairs whose predicted ordering matches the label.
double pairwise_accuracy(const RewardNet& net, std::span<const PreferencePair> pairs,
                         bool oracle_labels = false);

// Trains on the leading (1 - holdout) share and reports on the rest.
// Throws std::invalid_argument for fewer than 100 pairs.
RewardNet train_reward_model(std::span<const PreferencePair> pairs, const RewardNetConfig& net,
                             const RewardTrainConfig& config, std::uint64_t seed,
                             RewardTrainReport* report = nullptr);

}  // namespace fgpl::rw
