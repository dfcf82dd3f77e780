#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgpl/pipeline/checkpoint.hpp"
#include "fgpl/pipeline/config.hpp"
#include "fgpl/promptenh/policy.hpp"
#include "fgpl/rewards/gsb.hpp"

namespace fgpl::pipe {

enum class Stage { Pretrain, Sft, Rlhf, Pe, Distill };

std::string stage_name(Stage stage);
Stage parse_stage(const std::string& name);  // throws std::invalid_argument
// pretrain -> sft -> rlhf -> {pe, distill}
std::optional<Stage> prerequisite(Stage stage);

// Missing prerequisites, wrong task and similar ordering errors.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Artifact locations under config.out_dir.
std::string checkpoint_path(const ExperimentConfig& config, Stage stage);
std::string metrics_path(const ExperimentConfig& config, Stage stage);
std::string dataset_path(const ExperimentConfig& config);

struct StageOutput {
  std::string checkpoint;
  std::string metrics;
  std::vector<std::string> artifacts;  // every file written, checkpoint and metrics included
  std::string summary;                 // short human-readable result
};

// Runs one stage and overwrites its artifacts. Warnings (config hash
// mismatch, early stops) go to `log`. Throws StageError with
// "requires stage: <name>" when the prerequisite checkpoint is missing.
StageOutput run_stage(Stage stage, const ExperimentConfig& config, std::ostream& log);

// Metadata every checkpoint carries.
Checkpoint make_checkpoint(const std::string& stage, std::size_t iteration,
                           const ExperimentConfig& config, ParamStore params);
// The stored hash covers only the config sections the checkpoint's stage
// depends on. load_checked prints a warning when it differs from config's.
Checkpoint load_checked(const std::string& path, const ExperimentConfig& config, std::ostream& log);

void put_net_meta(Checkpoint& ckpt, const gen::FlowNetConfig& net);
gen::FlowNet flow_from_checkpoint(const Checkpoint& ckpt);
void put_stats_meta(Checkpoint& ckpt, const rw::NormStats& stats);
rw::NormStats stats_from_checkpoint(const Checkpoint& ckpt);

struct AspectResult {
  std::string aspect;
  rw::Gsb gsb;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

struct EvalReport {
  std::string label_a;
  std::string label_b;
  double delta = 0.0;
  double vagueness = 0.0;
  // alignment, video_aesthetic, image_aesthetic, motion, aggregate
  std::vector<AspectResult> aspects;

  const AspectResult& aspect(const std::string& name) const;  // throws std::out_of_range
};

// Paired GSB of two checkpoints. Each may hold a flow generator or a prompt
// enhancer (whose generator is resolved next to it). Both sides draw their
// initial noise for prompt p from (seed, "eval", p). Components are z-scored
// with statistics of B's samples; the aggregate uses config.weights.w. When
// either side is an enhancer both sides see the enhancer's user vagueness.
// Throws std::invalid_argument for an empty prompt list.
EvalReport evaluate(const std::string& ckpt_a, const std::string& ckpt_b,
                    const ExperimentConfig& config, std::span<const int> prompts, double delta,
                    std::ostream& log);

std::string eval_csv(const EvalReport& report);
std::string eval_summary(const EvalReport& report);

}  // namespace fgpl::pipe
