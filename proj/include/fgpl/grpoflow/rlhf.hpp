#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fgpl/genmodel/prompts.hpp"
#include "fgpl/grpoflow/grpo.hpp"

namespace fgpl::grpo {

struct GrpoConfig {
  std::size_t group_size = 8;
  std::size_t groups = 8;
  double clip = 0.2;
  double lr = 1e-3;
  std::size_t iterations = 300;
  double eps_std = 1e-8;
  std::size_t inner_steps = 1;     // gradient steps per rollout phase
  double grad_clip = 10.0;
  bool cycle_indices = false;
  // Collapse guard: halt when the moving-average reward stays below
  // peak - collapse_drop·(peak - start) for collapse_patience iterations.
  std::size_t collapse_window = 10;
  std::size_t collapse_patience = 20;
  double collapse_drop = 0.5;
  double collapse_min_gain = 0.5;

  // Throws std::invalid_argument when N < 2 or ε is outside (0, 1).
  void validate() const;
};

struct IterationStats {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  rw::Components mean_components{};
  double clip_fraction = 0.0;   // averaged over inner steps
  double first_clip_fraction = 0.0;
  double grad_norm = 0.0;
  double validity = 0.0;        // of this iteration's terminal samples
  std::size_t skipped = 0;
};

enum class RlhfStatus { Completed, Collapsed, Diverged };

struct RlhfResult {
  FlowNet model;               // final, or the last good state on divergence
  std::vector<IterationStats> history;
  RlhfStatus status = RlhfStatus::Completed;
  std::string message;
};

using IterationLogger = std::function<void(const IterationStats&)>;

// Moving-average collapse detector.
class CollapseGuard {
 public:
  explicit CollapseGuard(const GrpoConfig& config) : cfg_(config) {}
  // Returns true once the collapse condition has held for `patience` iterations.
  bool update(double mean_reward);

 private:
  GrpoConfig cfg_;
  std::vector<double> window_;
  std::optional<double> start_;
  double peak_ = 0.0;
  std::size_t below_ = 0;
};

// Flash-GRPO loop from an SFT model. Group g of iteration i conditions on
// prompts[(i·G + g) mod P] and takes its stochastic step at the isotemporal
// index assigned for that iteration.
RlhfResult rlhf_train(const FlowNet& sft, const gen::PromptSet& prompt_set,
                      std::span<const int> prompts, const NoiseSchedule& schedule,
                      const GrpoConfig& config, const TerminalReward& reward, std::uint64_t seed,
                      const IterationLogger& log = {});

}  // namespace fgpl::grpo
