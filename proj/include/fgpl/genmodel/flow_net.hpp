#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fgpl/diffcore/tape.hpp"
#include "fgpl/flowsde/sampler.hpp"

namespace fgpl::gen {

struct FlowNetConfig {
  std::size_t state_dim = 2;
  std::size_t num_prompts = 4;
  std::size_t hidden = 64;
  std::size_t depth = 2;          // hidden layers
  std::size_t time_features = 8;
  std::size_t prompt_dim = 8;
  std::string prefix = "flow";
};

// Sinusoidal features of per-row times: [B] -> [B, n].
Tensor time_features(std::span<const double> t, std::size_t n);

// Conditional velocity field v_θ(x, t, c): an MLP over
// [state, sin/cos time features, prompt embedding].
class FlowNet {
 public:
  FlowNet(FlowNetConfig config, std::uint64_t seed);
  FlowNet(FlowNetConfig config, ParamStore params);

  const FlowNetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::string name(const std::string& leaf) const { return cfg_.prefix + "/" + leaf; }

  // Rows of the prompt embedding table, [B, prompt_dim].
  Var embed(Tape& tape, std::span<const int> prompts) const;
  // x: [B, d], t: one time per row, cond: [B, prompt_dim].
  Var velocity(Tape& tape, Var x, std::span<const double> t, Var cond) const;
  Var velocity(Tape& tape, Var x, std::span<const double> t, std::span<const int> prompts) const;

  // Gradient-free evaluation at a shared time.
  Tensor velocity(const Tensor& x, double t, std::span<const int> prompts) const;
  Tensor velocity(const Tensor& x, double t, const Tensor& cond) const;

  // Batched velocity callable for the samplers. Keeps a reference to this net.
  flow::VelocityFn velocity_fn(std::vector<int> prompts) const;

 private:
  void init(std::uint64_t seed);
  void check_params() const;

  FlowNetConfig cfg_;
  ParamStore params_;
};

// Registers an MLP's weights "<prefix>/l<i>.w|b" with fan-in scaled Gaussian
// init; the last layer is scaled by out_gain.
void init_mlp(ParamStore& store, const std::string& prefix, std::span<const std::size_t> widths,
              RngStream& rng, double out_gain);
// Applies the MLP with SiLU between layers.
Var apply_mlp(Tape& tape, const ParamStore& store, const std::string& prefix,
              std::size_t layers, Var x);

}  // namespace fgpl::gen
