#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fgpl/diffcore/rng.hpp"

namespace fgpl::gen {

enum class Task { Point, Sequence };

std::string task_name(Task task);
Task parse_task(const std::string& name);

// Mixture of full-covariance Gaussians. Weights sum to 1.
class MixtureLaw {
 public:
  struct Component {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double weight = 1.0;
  };

  MixtureLaw() = default;
  explicit MixtureLaw(std::vector<Component> components);

  std::size_t dim() const;
  const std::vector<Component>& components() const { return comps_; }

  double log_density(std::span<const double> x) const;
  double component_log_density(std::size_t c, std::span<const double> x) const;
  double mahalanobis(std::size_t c, std::span<const double> x) const;
  // Squared Euclidean distance to the nearest component mean.
  double nearest_mode_sqdist(std::span<const double> x) const;
  std::vector<double> sample(RngStream& rng) const;

 private:
  struct Cached {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_norm = 0.0;  // log w - 0.5 log|2πΣ|
  };
  std::vector<Component> comps_;
  std::vector<Cached> cache_;
};

// Circular motion of a 2-D point over F frames, shifted as a whole by a random
// offset b ~ N(0, offset_std² I) with independent per-frame jitter:
//   f_i = c + ρ(cos(φ + ωi), sin(φ + ωi)) + b + frame_noise_std·ξ_i
struct SequenceDynamics {
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 1.0;
  double angular_velocity = 0.4;
  double phase = 0.0;
  double offset_std = 0.3;
  double frame_noise_std = 0.05;
  std::size_t frames = 8;

  // Noise-free trajectory, flattened [F·2].
  std::vector<double> nominal() const;
  // Analytic trajectory anchored at the sequence's own first frame.
  std::vector<double> anchored(std::span<const double> seq) const;
  // Per-frame Euclidean deviation from the anchored trajectory.
  std::vector<double> frame_deviation(std::span<const double> seq) const;
  // Exact law of the flattened sequence.
  MixtureLaw sequence_law() const;
  // Law of a single frame i.
  MixtureLaw frame_law(std::size_t i) const;
  std::vector<double> sample(RngStream& rng) const;
};

struct PromptSpec {
  int id = 0;
  std::string name;
  bool curated = true;
  MixtureLaw law;                  // target law of the flattened state
  std::optional<SequenceDynamics> dynamics;  // sequence task only
};

class PromptSet {
 public:
  PromptSet(Task task, std::vector<PromptSpec> prompts);

  Task task() const { return task_; }
  std::size_t size() const { return prompts_.size(); }
  std::size_t state_dim() const { return dim_; }
  std::size_t frames() const;        // 1 for the point task
  std::size_t frame_dim() const { return 2; }
  const PromptSpec& at(int id) const;  // throws std::out_of_range for unknown ids
  const std::vector<PromptSpec>& all() const { return prompts_; }
  std::vector<int> ids() const;
  std::vector<int> curated_ids() const;

  // One line per prompt; stable text used for the dataset manifest.
  std::string manifest() const;

 private:
  Task task_;
  std::vector<PromptSpec> prompts_;
  std::size_t dim_ = 0;
};

PromptSet default_point_prompts();
PromptSet default_sequence_prompts(std::size_t frames = 8);
PromptSet default_prompts(Task task);

}  // namespace fgpl::gen
