#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fgpl/ardistill/student.hpp"
#include "fgpl/flowsde/gaussian_oracle.hpp"
#include "fgpl/flowsde/schedule.hpp"
#include "fgpl/genmodel/flow_net.hpp"
#include "fgpl/genmodel/prompts.hpp"

namespace fgpl::ard {

// Frozen velocity source over flattened states: a trained FlowNet or the
// analytic Gaussian oracle. Times are per row.
struct Teacher {
  std::size_t dim = 0;
  std::size_t num_prompts = 0;
  std::function<Tensor(const Tensor& x, std::span<const double> t, std::span<const int> prompts)>
      velocity;

  // Velocity with every row at the same time, bound to fixed prompts.
  flow::VelocityFn velocity_fn(std::vector<int> prompts) const;
};

// Keeps a reference to `net`.
Teacher teacher_from_flow(const gen::FlowNet& net);
// Unconditional; prompts are ignored and num_prompts is 1.
Teacher teacher_from_oracle(const flow::GaussianOracle& oracle);

// Score of the rectified-flow marginal from its velocity:
//   ∇log q_t(x) = -(x + (1 - t)·v) / t, applied row-wise.
Tensor score_from_velocity(const Tensor& x, std::span<const double> t, const Tensor& v);

// Fixed randomness of one DMD evaluation.
struct DmdNoise {
  Tensor eps;             // generator input [B, D]
  std::vector<double> t;  // diffusion time per row, from the interior grid
  Tensor z;               // forward noise [B, D]
  std::vector<int> prompts;
};

// Draws eps, then t and z row by row. t is uniform over the grid times
// strictly inside (0, 1).
DmdNoise draw_dmd_noise(std::size_t batch, std::size_t dim, std::span<const int> prompt_pool,
                        const flow::NoiseSchedule& schedule, RngStream& rng);

// Forward interpolation Ψ(x, t) = (1 - t)·x + t·z on the tape.
Var interpolate(Tape& tape, Var x, std::span<const double> t, const Tensor& z);

// Per-row signal s_gen(Ψ) - s_data(Ψ) at the generator's current output.
// With `normalize`, row b is divided by mean_j |x̂_bj - x̂⁰_bj| where x̂⁰ is the
// teacher's clean-sample estimate Ψ - t·v_data, which bounds the step size
// when the generator is far from the data. Throws std::invalid_argument when
// teacher and fake disagree on dimension or prompt count, or either
// disagrees with the student.
Tensor dmd_signal(const Student& student, const Teacher& teacher, const Teacher& fake,
                  const DmdNoise& noise, bool normalize = false);

// Pseudo-objective mean_b ⟨signal_b, Ψ(G_θ(eps_b), t_b)⟩ with the signal held
// constant. Its gradient is the distribution-matching gradient.
Var dmd_pseudo_objective(Tape& tape, const Student& student, const DmdNoise& noise,
                         const Tensor& signal);

// Writes the distribution-matching gradient into student.params() and
// returns the gradient norm.
double dmd_grad(Student& student, const Teacher& teacher, const Teacher& fake,
                const DmdNoise& noise, bool normalize = false);

struct OdePairs;

enum class DistillStatus { Completed, Diverged };

struct DmdConfig {
  std::size_t iterations = 400;  // generator updates
  std::size_t batch = 64;
  std::size_t fake_ratio = 5;    // fake-score updates per generator update
  std::size_t fake_warmup = 0;   // fake-score updates before the first generator update
  double lr_gen = 1e-3;
  double lr_fake = 1e-3;
  double grad_clip = 10.0;
  bool normalize = true;         // per-sample signal normalization
  bool lr_decay = true;          // generator lr falls linearly to zero
  // Stage 1 only: regression steps onto teacher ODE pairs before DMD starts.
  std::size_t regression_warmup = 0;
  std::size_t warmup_pairs = 2000;
  // Weight of a regression loss onto teacher ODE pairs added to the
  // generator objective. Keeps the student near the teacher's own samples
  // when the teacher's score and its ODE endpoints disagree.
  double regression_weight = 0.0;
  std::size_t log_every = 50;
  void validate() const;
};

struct DmdStep {
  std::size_t iteration = 0;
  std::size_t fake_updates = 0;  // since the previous generator update
  double fake_loss = 0.0;
  double gen_grad_norm = 0.0;
  double signal_norm = 0.0;      // mean row norm of s_gen - s_data
};

struct DmdResult {
  Student student;
  gen::FlowNet fake;
  std::vector<DmdStep> history;
  DistillStatus status = DistillStatus::Completed;
  std::string message;
};

using DmdLogger = std::function<void(const DmdStep&)>;

// Alternating updates: the fake score regresses generator outputs by flow
// matching, then the generator follows dmd_grad. The generator is
// `student` as given, so a block-causal student trains through its own
// rollouts. On a non-finite value the last good state is returned.
DmdResult train_dmd(const Student& student, const Teacher& teacher, const gen::FlowNet& fake_init,
                    std::span<const int> prompt_pool, const flow::NoiseSchedule& schedule,
                    const DmdConfig& config, std::uint64_t seed, const std::string& tag,
                    const DmdLogger& log = {}, const OdePairs* anchor = nullptr);

// Stage 1: few-step bidirectional student. With regression_warmup > 0 the
// student first regresses onto teacher ODE pairs drawn under "stage1:pairs";
// a randomly initialized student otherwise wanders where the teacher's score
// is unreliable and the updates run away.
DmdResult stage1_dmd(const Student& init, const Teacher& teacher, const gen::FlowNet& fake_init,
                     std::span<const int> prompt_pool, const flow::NoiseSchedule& schedule,
                     const DmdConfig& config, std::uint64_t seed, const DmdLogger& log = {});

struct OdePairs {
  std::size_t dim = 0;
  Tensor noise;    // [n, D]
  Tensor sample;   // [n, D]
  std::vector<int> prompts;
  std::size_t size() const { return prompts.size(); }
};

// n deterministic teacher ODE endpoints. Pair j uses prompt
// prompt_pool[j mod P] and noise from (seed, tag, j).
OdePairs collect_ode_pairs(const Teacher& teacher, const flow::NoiseSchedule& schedule,
                           std::span<const int> prompt_pool, std::size_t n, std::uint64_t seed,
                           const std::string& tag);

struct RegressionConfig {
  std::size_t steps = 1500;
  std::size_t batch = 64;
  double lr = 2e-3;
  double grad_clip = 5.0;
  std::size_t log_every = 100;
};

struct RegressionPoint {
  std::size_t step = 0;
  double loss = 0.0;
};

// Mean squared error of the student's output against the teacher pair. A
// block-causal student is teacher-forced on the pair's sample; a
// bidirectional one generates the whole sequence at once.
Var regression_loss(Tape& tape, const Student& student, const OdePairs& pairs,
                    std::span<const std::size_t> rows);

struct RegressionResult {
  Student student;
  double initial_loss = 0.0;  // on the whole pair set
  double final_loss = 0.0;
  std::vector<RegressionPoint> history;
};

// Minibatch Adam on regression_loss in either mask mode; minibatches derive
// from (seed, tag, step). Throws gen::TrainingDiverged on a non-finite loss.
RegressionResult regress_onto_pairs(const Student& student, const OdePairs& pairs,
                                    const RegressionConfig& config, std::uint64_t seed,
                                    const std::string& tag,
                                    const std::function<void(const RegressionPoint&)>& log = {});

// Stage 2: per-frame causal regression. Throws std::logic_error unless the
// student is block-causal.
RegressionResult stage2_causal_regression(const Student& student, const OdePairs& pairs,
                                          const RegressionConfig& config, std::uint64_t seed,
                                          const std::function<void(const RegressionPoint&)>& log =
                                              {});

// Stage-1 weights copied into a fresh block-causal student wherever shapes
// match. Returns the student and the number of arrays copied.
Student causal_init(const Student& stage1, std::uint64_t seed, std::size_t* copied = nullptr);

// Stage 3: video-level DMD on the student's own rollouts.
DmdResult stage3_self_forcing(const Student& stage2, const Teacher& teacher,
                              const gen::FlowNet& fake_init, std::span<const int> prompt_pool,
                              const flow::NoiseSchedule& schedule, const DmdConfig& config,
                              std::uint64_t seed, const DmdLogger& log = {},
                              const OdePairs* anchor = nullptr);

struct ExposureReport {
  std::vector<double> frame_error;  // mean deviation from the analytic dynamics per frame
  // Least-squares slope of error against frame index over frames 1..F-1.
  // Frame 0 anchors the dynamics, so its error is zero by construction.
  double slope = 0.0;
};

// Self-forcing rollouts, n per prompt with noise from (seed, "exposure", p, j);
// the same seed gives paired rollouts across students. Needs F >= 3.
ExposureReport exposure_bias(const Student& student, const gen::PromptSet& prompts,
                             std::span<const int> prompt_ids, std::size_t n, std::uint64_t seed);
double fit_slope(std::span<const double> y);
// "frame,<label>,..." CSV with one column per report.
std::string exposure_csv(std::span<const std::string> labels,
                         std::span<const ExposureReport> reports);

// Student samples with the same per-row noise as teacher samples drawn by
// collect_ode_pairs(..., seed, tag), so pairs are seed-matched.
Tensor student_samples(const Student& student, const OdePairs& pairs);

}  // namespace fgpl::ard
