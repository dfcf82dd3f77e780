#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fgpl/diffcore/tensor.hpp"
#include "fgpl/genmodel/prompts.hpp"

namespace fgpl::rw {

using gen::PromptSet;

// Order used everywhere: alignment, video aesthetic, image aesthetic, motion.
inline constexpr std::size_t kComponents = 4;
using Components = std::array<double, kComponents>;
inline constexpr std::array<const char*, kComponents> kComponentNames = {
    "alignment", "video_aesthetic", "image_aesthetic", "motion"};

// Point task: -(squared distance to the nearest mode).
// Sequence task: -(mean per-frame deviation from the anchored trajectory).
double reward_alignment(const PromptSet& prompts, int prompt, std::span<const double> x);
// Log-density of the whole sample under the prompt's target law.
double reward_video_aesthetic(const PromptSet& prompts, int prompt, std::span<const double> x);
// Mean of per-frame log-densities. Equal to the video term for points.
double reward_image_aesthetic(const PromptSet& prompts, int prompt, std::span<const double> x);
// -mean ||second difference||² over frames of width frame_dim. Needs >= 3 frames.
double reward_motion(std::span<const double> seq, std::size_t frame_dim = 2);

// All four raw components. Motion is identically 0 for points.
Components raw_components(const PromptSet& prompts, int prompt, std::span<const double> x);

// Per-component reference statistics for z-normalization.
struct NormStats {
  Components mean{};
  Components std{};
};

// Population statistics over a reference batch. Throws on an empty batch.
NormStats fit_norm_stats(std::span<const Components> batch);

// Components whose reference std is below this contribute z = 0.
inline constexpr double kStdFloor = 1e-8;

Components normalize(const Components& c, const NormStats& stats);

struct RewardWeights {
  Components w = {0.3, 0.3, 0.2, 0.2};
  std::optional<NormStats> stats;

  // Throws std::invalid_argument for negative or all-zero weights.
  void validate() const;
};

// Parses "a,b,c,d". Throws std::invalid_argument on malformed input.
Components parse_weights(const std::string& text);

// Σ w_i · z_i. Throws std::logic_error when the stats are not frozen.
double aggregate(const Components& c, const RewardWeights& weights);

struct RewardBundle {
  double alignment = 0.0;
  double video_aesthetic = 0.0;
  double image_aesthetic = 0.0;
  double motion = 0.0;
  double aggregate = 0.0;

  Components components() const { return {alignment, video_aesthetic, image_aesthetic, motion}; }
};

// Analytic proxy reward bound to a prompt set and frozen weights.
class AnalyticReward {
 public:
  AnalyticReward(const PromptSet& prompts, RewardWeights weights);

  const PromptSet& prompts() const { return *prompts_; }
  const RewardWeights& weights() const { return weights_; }

  RewardBundle bundle(int prompt, std::span<const double> x) const;
  double operator()(int prompt, std::span<const double> x) const;
  // Row-wise bundles for samples [N, d].
  std::vector<RewardBundle> score(const Tensor& samples, std::span<const int> prompt_of_row) const;

 private:
  const PromptSet* prompts_;
  RewardWeights weights_;
};

// Raw components for every row.
std::vector<Components> raw_batch(const PromptSet& prompts, const Tensor& samples,
                                  std::span<const int> prompt_of_row);

}  // namespace fgpl::rw
