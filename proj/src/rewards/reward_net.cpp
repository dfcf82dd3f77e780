#include "fgpl/rewards/reward_net.hpp"

#include <cmath>
#include <stdexcept>

#include "fgpl/diffcore/adam.hpp"
#include "fgpl/diffcore/ops.hpp"
#include "fgpl/diffcore/rng.hpp"
#include "fgpl/genmodel/flow_net.hpp"

namespace fgpl::rw {

namespace o = fgpl::ops;

RewardNet::RewardNet(RewardNetConfig config, std::uint64_t seed) : cfg_(config) {
  RngStream rng(seed, "init:reward");
  params_.add("reward/prompt_emb", Tensor::matrix(cfg_.num_prompts, cfg_.prompt_dim,
                                                  rng.gaussian(cfg_.num_prompts * cfg_.prompt_dim)));
  const std::vector<std::size_t> enc = {cfg_.state_dim + cfg_.prompt_dim, cfg_.hidden, cfg_.hidden};
  gen::init_mlp(params_, "reward/enc", enc, rng, 1.0);
  const std::vector<std::size_t> head = {cfg_.hidden, 2};
  gen::init_mlp(params_, "reward/head", head, rng, 0.1);
}

RewardNet::RewardNet(RewardNetConfig config, ParamStore params)
    : cfg_(config), params_(std::move(params)) {
  check_params();
}

void RewardNet::check_params() const {
  if (params_.get("reward/prompt_emb").shape != Shape{cfg_.num_prompts, cfg_.prompt_dim} ||
      params_.get("reward/enc/l0.w").shape != Shape{cfg_.hidden, cfg_.state_dim + cfg_.prompt_dim}) {
    throw std::invalid_argument("RewardNet: parameters do not match config");
  }
}

Var RewardNet::forward(Tape& tape, Var x, std::span<const int> prompts) const {
  Var emb = o::gather_rows(tape.param(params_, "reward/prompt_emb"), prompts);
  Var h = gen::apply_mlp(tape, params_, "reward/enc", 2, o::concat_cols({x, emb}));
  return gen::apply_mlp(tape, params_, "reward/head", 1, o::silu(h));
}

std::vector<RewardNet::Output> RewardNet::predict(const Tensor& x,
                                                  std::span<const int> prompts) const {
  Tape tape(false);
  const Tensor out = forward(tape, tape.constant(x), prompts).value();
  std::vector<Output> res;
  for (std::size_t r = 0; r < out.rows(); ++r)
    res.push_back({out.values[2 * r], std::exp(out.values[2 * r + 1])});
  return res;
}

double RewardNet::score(int prompt, std::span<const double> x) const {
  Tensor t = Tensor::matrix(1, x.size(), {x.begin(), x.end()});
  return predict(t, std::span<const int>(&prompt, 1))[0].score;
}

Var rank_loss(Var out_pref, Var out_other) {
  Var margin = o::sub(o::slice_cols(out_pref, 0, 1), o::slice_cols(out_other, 0, 1));
  Var u2 = o::add(o::exp(o::scale(o::slice_cols(out_pref, 1, 1), 2.0)),
                  o::exp(o::scale(o::slice_cols(out_other, 1, 1), 2.0)));
  return o::neg(o::mean(o::log_sigmoid(o::div(margin, o::sqrt(u2)))));
}

std::vector<PreferencePair> make_preferences(const PromptSet& prompts,
                                             const RewardWeights& weights,
                                             const PreferenceConfig& config, std::uint64_t seed) {
  const auto ids = prompts.ids();
  std::vector<PreferencePair> out;
  out.reserve(config.pairs);
  for (std::size_t i = 0; i < config.pairs; ++i) {
    RngStream rng(seed, "preferences", i);
    PreferencePair p;
    p.prompt = ids[rng.uniform_index(ids.size())];
    const auto& spec = prompts.at(p.prompt);
    auto draw = [&] {
      auto x = spec.dynamics ? spec.dynamics->sample(rng) : spec.law.sample(rng);
      const double jitter = rng.uniform(0.0, config.max_jitter);
      for (double& v : x) v += jitter * rng.normal();
      return x;
    };
    p.a = draw();
    p.b = draw();
    const double ra = aggregate(raw_components(prompts, p.prompt, p.a), weights);
    const double rb = aggregate(raw_components(prompts, p.prompt, p.b), weights);
    p.oracle_preferred = ra >= rb ? 0 : 1;
    p.preferred = rng.uniform() < config.label_noise ? 1 - p.oracle_preferred : p.oracle_preferred;
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

struct PairBatch {
  Tensor pref, other;
  std::vector<int> prompts;
};

PairBatch assemble(std::span<const PreferencePair> pairs, std::span<const std::size_t> rows,
                   std::size_t dim) {
  PairBatch b{Tensor::zeros({rows.size(), dim}), Tensor::zeros({rows.size(), dim}), {}};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& p = pairs[rows[r]];
    const auto& win = p.preferred == 0 ? p.a : p.b;
    const auto& lose = p.preferred == 0 ? p.b : p.a;
    std::copy(win.begin(), win.end(), b.pref.values.begin() + r * dim);
    std::copy(lose.begin(), lose.end(), b.other.values.begin() + r * dim);
    b.prompts.push_back(p.prompt);
  }
  return b;
}

}  // namespace

double pairwise_accuracy(const RewardNet& net, std::span<const PreferencePair> pairs,
                         bool oracle_labels) {
  if (pairs.empty()) return 0.0;
  const std::size_t dim = net.config().state_dim;
  Tensor a = Tensor::zeros({pairs.size(), dim}), b = Tensor::zeros({pairs.size(), dim});
  std::vector<int> prompts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::copy(pairs[i].a.begin(), pairs[i].a.end(), a.values.begin() + i * dim);
    std::copy(pairs[i].b.begin(), pairs[i].b.end(), b.values.begin() + i * dim);
    prompts.push_back(pairs[i].prompt);
  }
  const auto ra = net.predict(a, prompts), rb = net.predict(b, prompts);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int label = oracle_labels ? pairs[i].oracle_preferred : pairs[i].preferred;
    hits += (ra[i].score >= rb[i].score ? 0 : 1) == label;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

RewardNet train_reward_model(std::span<const PreferencePair> pairs, const RewardNetConfig& net,
                             const RewardTrainConfig& config, std::uint64_t seed,
                             RewardTrainReport* report) {
  if (pairs.size() < 100) throw std::invalid_argument("train_reward_model: need at least 100 pairs");
  for (const auto& p : pairs) {
    if (p.a.size() != net.state_dim || p.b.size() != net.state_dim) {
      throw std::invalid_argument("train_reward_model: sample width does not match config");
    }
  }
  const std::size_t n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(pairs.size()) * (1.0 - config.holdout)));
  const auto train = pairs.first(n_train);
  const auto held = pairs.subspan(n_train);

  RewardNet model(net, seed);
  AdamState adam(AdamConfig{config.lr});
  double last = 0.0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    RngStream rng(seed, "reward-train", step);
    std::vector<std::size_t> rows(std::min(config.batch, train.size()));
    for (auto& r : rows) r = rng.uniform_index(train.size());
    const PairBatch b = assemble(train, rows, net.state_dim);
    Tape tape;
    Var loss = rank_loss(model.forward(tape, tape.constant(b.pref), b.prompts),
                         model.forward(tape, tape.constant(b.other), b.prompts));
    last = loss.item();
    backward(loss, model.params());
    adam_step(model.params(), adam);
  }
  model.params().clear_grads();
  if (report) {
    report->final_loss = last;
    report->train_accuracy = pairwise_accuracy(model, train);
    report->heldout_accuracy = pairwise_accuracy(model, held);
    report->heldout_oracle_agreement = pairwise_accuracy(model, held, true);
  }
  return model;
}

}  // namespace fgpl::rw
