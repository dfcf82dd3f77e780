#include "fgpl/rewards/components.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fgpl::rw {

double reward_alignment(const PromptSet& prompts, int prompt, std::span<const double> x) {
  const auto& spec = prompts.at(prompt);
  if (!spec.dynamics) return -spec.law.nearest_mode_sqdist(x);
  const auto dev = spec.dynamics->frame_deviation(x);
  double s = 0.0;
  for (double d : dev) s += d;
  return -s / static_cast<double>(dev.size());
}

double reward_video_aesthetic(const PromptSet& prompts, int prompt, std::span<const double> x) {
  return prompts.at(prompt).law.log_density(x);
}

double reward_image_aesthetic(const PromptSet& prompts, int prompt, std::span<const double> x) {
  const auto& spec = prompts.at(prompt);
  if (!spec.dynamics) return spec.law.log_density(x);
  const std::size_t f = spec.dynamics->frames;
  double s = 0.0;
  for (std::size_t i = 0; i < f; ++i) s += spec.dynamics->frame_law(i).log_density(x.subspan(2 * i, 2));
  return s / static_cast<double>(f);
}

double reward_motion(std::span<const double> seq, std::size_t frame_dim) {
  if (frame_dim == 0 || seq.size() % frame_dim != 0) {
    throw std::invalid_argument("reward_motion: length is not a multiple of the frame width");
  }
  const std::size_t f = seq.size() / frame_dim;
  if (f < 3) throw std::invalid_argument("reward_motion: needs at least 3 frames");
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < f; ++i) {
    for (std::size_t j = 0; j < frame_dim; ++j) {
      const double a = seq[(i + 1) * frame_dim + j] - 2.0 * seq[i * frame_dim + j] +
                       seq[(i - 1) * frame_dim + j];
      s += a * a;
    }
  }
  return -s / static_cast<double>(f - 2);
}

Components raw_components(const PromptSet& prompts, int prompt, std::span<const double> x) {
  const bool seq = prompts.at(prompt).dynamics.has_value();
  return {reward_alignment(prompts, prompt, x), reward_video_aesthetic(prompts, prompt, x),
          reward_image_aesthetic(prompts, prompt, x),
          seq ? reward_motion(x, prompts.frame_dim()) : 0.0};
}

NormStats fit_norm_stats(std::span<const Components> batch) {
  if (batch.empty()) throw std::invalid_argument("fit_norm_stats: empty reference batch");
  NormStats s;
  const double n = static_cast<double>(batch.size());
  for (const auto& c : batch)
    for (std::size_t i = 0; i < kComponents; ++i) s.mean[i] += c[i] / n;
  for (const auto& c : batch)
    for (std::size_t i = 0; i < kComponents; ++i) s.std[i] += (c[i] - s.mean[i]) * (c[i] - s.mean[i]) / n;
  for (double& v : s.std) v = std::sqrt(v);
  return s;
}

Components normalize(const Components& c, const NormStats& stats) {
  Components z{};
  for (std::size_t i = 0; i < kComponents; ++i)
    z[i] = stats.std[i] < kStdFloor ? 0.0 : (c[i] - stats.mean[i]) / stats.std[i];
  return z;
}

void RewardWeights::validate() const {
  bool any = false;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("reward weights must be finite and nonnegative");
    any = any || v > 0.0;
  }
  if (!any) throw std::invalid_argument("reward weights are all zero");
}

Components parse_weights(const std::string& text) {
  Components w{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == kComponents) throw std::invalid_argument("expected 4 reward weights: " + text);
    std::size_t used = 0;
    try {
      w[i] = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("bad reward weight '" + item + "'");
    ++i;
  }
  if (i != kComponents) throw std::invalid_argument("expected 4 reward weights: " + text);
  return w;
}

double aggregate(const Components& c, const RewardWeights& weights) {
  weights.validate();
  if (!weights.stats) throw std::logic_error("aggregate: normalization statistics are not frozen");
  const Components z = normalize(c, *weights.stats);
  double s = 0.0;
  for (std::size_t i = 0; i < kComponents; ++i) s += weights.w[i] * z[i];
  return s;
}

AnalyticReward::AnalyticReward(const PromptSet& prompts, RewardWeights weights)
    : prompts_(&prompts), weights_(std::move(weights)) {
  weights_.validate();
  if (!weights_.stats) throw std::logic_error("AnalyticReward: normalization statistics are not frozen");
}

RewardBundle AnalyticReward::bundle(int prompt, std::span<const double> x) const {
  const Components c = raw_components(*prompts_, prompt, x);
  return {c[0], c[1], c[2], c[3], aggregate(c, weights_)};
}

double AnalyticReward::operator()(int prompt, std::span<const double> x) const {
  return bundle(prompt, x).aggregate;
}

std::vector<RewardBundle> AnalyticReward::score(const Tensor& samples,
                                                std::span<const int> prompt_of_row) const {
  if (prompt_of_row.size() != samples.rows()) throw std::invalid_argument("score: prompt count mismatch");
  const std::size_t d = samples.cols();
  std::vector<RewardBundle> out;
  out.reserve(samples.rows());
  for (std::size_t r = 0; r < samples.rows(); ++r)
    out.push_back(bundle(prompt_of_row[r], {&samples.values[r * d], d}));
  return out;
}

std::vector<Components> raw_batch(const PromptSet& prompts, const Tensor& samples,
                                  std::span<const int> prompt_of_row) {
  if (prompt_of_row.size() != samples.rows()) throw std::invalid_argument("raw_batch: prompt count mismatch");
  const std::size_t d = samples.cols();
  std::vector<Components> out;
  out.reserve(samples.rows());
  for (std::size_t r = 0; r < samples.rows(); ++r)
    out.push_back(raw_components(prompts, prompt_of_row[r], {&samples.values[r * d], d}));
  return out;
}

}  // namespace fgpl::rw
