#include "fgpl/genmodel/flow_net.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fgpl/diffcore/ops.hpp"
#include "fgpl/diffcore/rng.hpp"

namespace fgpl::gen {

namespace o = fgpl::ops;

Tensor time_features(std::span<const double> t, std::size_t n) {
  Tensor out = Tensor::zeros({t.size(), n});
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (std::size_t j = 0; j < n / 2; ++j) {
      const double w = std::numbers::pi * static_cast<double>(1u << j) / 2.0;
      out.values[b * n + 2 * j] = std::sin(w * t[b]);
      out.values[b * n + 2 * j + 1] = std::cos(w * t[b]);
    }
  }
  return out;
}

void init_mlp(ParamStore& store, const std::string& prefix, std::span<const std::size_t> widths,
              RngStream& rng, double out_gain) {
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    const double gain = (l + 2 == widths.size()) ? out_gain : 1.0;
    auto w = rng.gaussian(in * out);
    const double s = gain / std::sqrt(static_cast<double>(in));
    for (double& v : w) v *= s;
    store.add(prefix + "/l" + std::to_string(l) + ".w", Tensor::matrix(out, in, std::move(w)));
    store.add(prefix + "/l" + std::to_string(l) + ".b", Tensor::zeros({out}));
  }
}

Var apply_mlp(Tape& tape, const ParamStore& store, const std::string& prefix,
              std::size_t layers, Var x) {
  Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + "/l" + std::to_string(l);
    h = o::linear(h, tape.param(store, base + ".w"), tape.param(store, base + ".b"));
    if (l + 1 < layers) h = o::silu(h);
  }
  return h;
}

FlowNet::FlowNet(FlowNetConfig config, std::uint64_t seed) : cfg_(std::move(config)) {
  init(seed);
}

FlowNet::FlowNet(FlowNetConfig config, ParamStore params)
    : cfg_(std::move(config)), params_(std::move(params)) {
  check_params();
}

void FlowNet::init(std::uint64_t seed) {
  RngStream rng(seed, "init:" + cfg_.prefix);
  auto emb = rng.gaussian(cfg_.num_prompts * cfg_.prompt_dim);
  params_.add(name("prompt_emb"), Tensor::matrix(cfg_.num_prompts, cfg_.prompt_dim, emb));
  std::vector<std::size_t> widths = {cfg_.state_dim + cfg_.time_features + cfg_.prompt_dim};
  for (std::size_t i = 0; i < cfg_.depth; ++i) widths.push_back(cfg_.hidden);
  widths.push_back(cfg_.state_dim);
  init_mlp(params_, cfg_.prefix + "/mlp", widths, rng, 0.1);
}

void FlowNet::check_params() const {
  const auto& emb = params_.get(name("prompt_emb"));
  if (emb.shape != Shape{cfg_.num_prompts, cfg_.prompt_dim}) {
    throw std::invalid_argument("FlowNet: prompt embedding shape " + shape_str(emb.shape) +
                                " does not match config");
  }
  const auto& last = params_.get(name("mlp/l" + std::to_string(cfg_.depth) + ".w"));
  if (last.shape[0] != cfg_.state_dim) {
    throw std::invalid_argument("FlowNet: output layer does not match state dimension");
  }
}

Var FlowNet::embed(Tape& tape, std::span<const int> prompts) const {
  return o::gather_rows(tape.param(params_, name("prompt_emb")), prompts);
}

Var FlowNet::velocity(Tape& tape, Var x, std::span<const double> t, Var cond) const {
  Var tf = tape.constant(time_features(t, cfg_.time_features));
  Var in = o::concat_cols({x, tf, cond});
  return apply_mlp(tape, params_, cfg_.prefix + "/mlp", cfg_.depth + 1, in);
}

Var FlowNet::velocity(Tape& tape, Var x, std::span<const double> t,
                      std::span<const int> prompts) const {
  return velocity(tape, x, t, embed(tape, prompts));
}

Tensor FlowNet::velocity(const Tensor& x, double t, std::span<const int> prompts) const {
  Tape tape(false);
  std::vector<double> ts(x.rows(), t);
  return velocity(tape, tape.constant(x), ts, prompts).value();
}

Tensor FlowNet::velocity(const Tensor& x, double t, const Tensor& cond) const {
  Tape tape(false);
  std::vector<double> ts(x.rows(), t);
  return velocity(tape, tape.constant(x), ts, tape.constant(cond)).value();
}

flow::VelocityFn FlowNet::velocity_fn(std::vector<int> prompts) const {
  return [this, prompts = std::move(prompts)](const Tensor& x, double t) {
    return velocity(x, t, prompts);
  };
}

}  // namespace fgpl::gen
