#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "fgpl/ardistill/distill.hpp"
#include "fgpl/flowsde/schedule.hpp"
#include "fgpl/genmodel/training.hpp"
#include "fgpl/grpoflow/rlhf.hpp"
#include "fgpl/promptenh/train.hpp"
#include "fgpl/rewards/components.hpp"

namespace fgpl::pipe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::size_t per_prompt = 2000;
  double corruption = 0.2;
};

struct DistillConfig {
  ard::StudentConfig student;
  ard::DmdConfig stage1;
  std::size_t pairs = 3000;
  ard::RegressionConfig stage2;
  ard::DmdConfig stage3;
  std::size_t exposure_rollouts = 100;  // per prompt
  std::size_t gsb_pairs = 600;          // teacher-vs-student comparisons
  double delta = 0.1;
};

struct EvalConfig {
  std::size_t samples = 100;  // per prompt
  double delta = 0.1;
  double vagueness = 0.0;     // user-input vagueness when neither side is an enhancer
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  gen::Task task = gen::Task::Point;
  std::string out_dir = "runs/default";
  bool record_wall_time = false;  // fill the metrics "seconds" column

  flow::NoiseSchedule schedule;
  DataConfig data;
  gen::FlowNetConfig net;
  gen::TrainConfig pretrain;
  gen::TrainConfig sft;
  std::size_t stats_samples = 250;  // per prompt, for reward normalization
  rw::RewardWeights weights;
  grpo::GrpoConfig rlhf;
  pe::PeConfig pe;
  std::string vocab;
  DistillConfig distill;
  EvalConfig eval;

  // Throws ConfigError describing the first invalid field.
  void validate() const;
};

// Defaults tuned for each task. The network width follows the task's state
// dimension.
ExperimentConfig default_config(gen::Task task);

// Sets one key. Section "" or "global" holds seed, task, out and
// record_wall_time. Throws ConfigError for unknown keys or unparsable values.
void set_key(ExperimentConfig& config, const std::string& section, const std::string& key,
             const std::string& value);

// INI text: `key = value` lines under `[section]` headers. The task key is
// applied first so task defaults never override explicit keys.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical text of every field; stable across runs and platforms.
std::string config_text(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);
// Hash of the listed sections only, ignoring the output directory and the
// wall-time switch.
std::uint64_t config_hash(const ExperimentConfig& config, std::span<const std::string> sections);

}  // namespace fgpl::pipe
