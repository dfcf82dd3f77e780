#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fgpl/diffcore/rng.hpp"
#include "fgpl/diffcore/tape.hpp"

namespace fgpl::ard {

enum class MaskMode { Bidirectional, BlockCausal };

std::string mask_name(MaskMode mode);

struct StudentConfig {
  std::size_t frames = 8;
  std::size_t frame_dim = 2;
  std::size_t num_prompts = 3;
  std::size_t prompt_dim = 8;
  std::size_t pos_dim = 8;
  std::size_t time_features = 8;
  std::size_t hidden = 64;
  std::size_t depth = 2;
  std::size_t steps = 4;  // denoising steps per frame (causal) or per sequence
  MaskMode mode = MaskMode::Bidirectional;

  std::size_t dim() const { return frames * frame_dim; }
  // Throws std::invalid_argument on zero sizes.
  void validate() const;
};

// Few-step generator over F frames. Every frame shares one velocity MLP fed
// with [frame state, time features, prompt embedding, frame position, context],
// where the context is an F·d vector of other frames:
//   bidirectional: the current state of every frame, denoised jointly;
//   block-causal:  the finished frames before i, zeros from i onward.
// The two modes have identical parameter shapes.
class Student {
 public:
  Student(StudentConfig config, std::uint64_t seed);
  Student(StudentConfig config, ParamStore params);

  const StudentConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  // Copy with another mask mode and the same weights.
  Student with_mode(MaskMode mode) const;

  // Per-row velocity. x: [R, d], ctx: [R, F·d]; one time, prompt and frame
  // position per row.
  Var frame_velocity(Tape& tape, Var x, std::span<const double> t, std::span<const int> prompts,
                     std::span<const int> positions, Var ctx) const;

  // Full generation from eps [B, F·d]. Bidirectional mode denoises all frames
  // together; block-causal mode rolls frames out one at a time, each
  // conditioned on the frames already produced (gradients flow through them).
  Var generate(Tape& tape, Var eps, std::span<const int> prompts) const;
  Tensor generate(const Tensor& eps, std::span<const int> prompts) const;

  // k Euler steps of one frame from eps_i [B, d] with a fixed context [B, F·d].
  Var denoise_frame(Tape& tape, Var eps_i, std::size_t frame, std::span<const int> prompts,
                    Var ctx) const;

  // Block-causal frames computed against a supplied history [B, F·d]: frame i
  // sees history frames < i. Feeding the model's own rollout as history
  // reproduces the rollout; feeding teacher samples is teacher forcing.
  // Returns [B, F·d] with the frames in order.
  Var teacher_forced(Tape& tape, Var eps, std::span<const int> prompts,
                     const Tensor& history) const;

 private:
  void init(std::uint64_t seed);
  StudentConfig cfg_;
  ParamStore params_;
};

// Previously generated frames of one rollout. Append-only, capacity F.
class FrameCache {
 public:
  FrameCache(std::size_t frames, std::size_t frame_dim);

  std::size_t size() const { return frames_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Throws std::length_error when the cache already holds F frames.
  void append(std::vector<double> frame);
  const std::vector<double>& at(std::size_t i) const { return frames_.at(i); }
  // Context vector: cached frames, zero-padded to F·d.
  std::vector<double> context() const;

 private:
  std::size_t capacity_;
  std::size_t frame_dim_;
  std::vector<std::vector<double>> frames_;
};

// Sequential rollout of one sequence with a FrameCache. Noise for frame i is
// drawn from the stream just before frame i is generated. Throws
// std::logic_error for a bidirectional student.
std::vector<double> self_forcing_rollout(const Student& student, int prompt, RngStream& stream);

struct ProbeReport {
  std::vector<bool> prefix_unchanged;  // per perturbed frame j: frames < j bit-identical
  std::vector<bool> frame_changed;     // per j: frame j itself moved
  bool passed = false;
};

// Perturbs each frame's noise in turn and checks that no earlier frame moves.
ProbeReport causality_probe(const Student& student, int prompt, std::uint64_t seed);

}  // namespace fgpl::ard
