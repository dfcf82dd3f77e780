#include "fgpl/promptenh/train.hpp"

#include <cmath>
#include <stdexcept>

#include "fgpl/diffcore/adam.hpp"
#include "fgpl/diffcore/ops.hpp"
#include "fgpl/flowsde/sampler.hpp"
#include "fgpl/grpoflow/grpo.hpp"

namespace fgpl::pe {

namespace o = fgpl::ops;

Tensor sample_conditioned(const gen::FlowNet& generator, const flow::NoiseSchedule& schedule,
                          const Conditioning& cond, std::size_t n, RngStream& stream) {
  const std::size_t d = generator.config().state_dim, c = cond.cond.cols();
  Tensor x = Tensor::zeros({n, d});
  stream.fill_gaussian(x.values);
  for (double& v : x.values) v *= cond.noise_scale;
  Tensor rows = Tensor::zeros({n, c});
  for (std::size_t r = 0; r < n; ++r)
    std::copy(cond.cond.values.begin(), cond.cond.values.end(), rows.values.begin() + r * c);
  return flow::sample_ode(
      [&](const Tensor& xt, double t) { return generator.velocity(xt, t, rows); }, schedule,
      std::move(x));
}

Outcome pe_outcome_reward(const gen::FlowNet& generator, const flow::NoiseSchedule& schedule,
                          const ModifierVocab& vocab, const gen::PromptSet& prompts,
                          const rw::NormStats& stats, const PeWeights& weights, int prompt,
                          std::span<const int> y, std::size_t m, RngStream& stream,
                          double vagueness) {
  if (m == 0) throw std::invalid_argument("pe_outcome_reward: need at least one sample");
  for (int t : y) vocab.at(t);
  // A malformed rewrite cannot be parsed downstream; the raw input is used.
  const std::span<const int> used = well_formed(y) ? y : std::span<const int>();
  const Tensor s = sample_conditioned(generator, schedule, apply_effects(generator, vocab, prompt, used, vagueness), m, stream);
  const std::vector<int> rows(m, prompt);
  Outcome out;
  for (const auto& c : rw::raw_batch(prompts, s, rows)) {
    const auto z = rw::normalize(c, stats);
    out.alignment_z += z[0] / static_cast<double>(m);
    out.aesthetic_z += z[1] / static_cast<double>(m);
  }
  out.value = weights.alignment * out.alignment_z + weights.aesthetic * out.aesthetic_z;
  return out;
}

void PeConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("PE group size must be at least 2");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("PE clip must lie in (0, 1)");
  if (!(beta_kl >= 0.0)) throw std::invalid_argument("beta_kl must be nonnegative");
  if (samples == 0) throw std::invalid_argument("PE samples must be positive");
  if (!(vagueness >= 0.0 && vagueness < 1.0)) throw std::invalid_argument("vagueness must lie in [0, 1)");
}

PeSurrogate pe_surrogate(Tape& tape, const EnhancerPolicy& policy, const EnhancerPolicy& reference,
                         std::span<const EnhancedPrompt> seqs, std::span<const double> advantages,
                         double clip, double beta_kl) {
  if (seqs.size() != advantages.size() || seqs.empty()) {
    throw std::invalid_argument("pe_surrogate: one advantage per sequence");
  }
  std::vector<double> old;
  for (const auto& s : seqs) old.push_back(s.logp);
  Var ratio = o::exp(o::sub(sequence_logprob(tape, policy, seqs), tape.constant(Tensor::vector(old))));
  Var a = tape.constant(Tensor::vector({advantages.begin(), advantages.end()}));
  Var surr = o::mean(o::minimum(o::mul(ratio, a), o::mul(o::clamp(ratio, 1.0 - clip, 1.0 + clip), a)));
  Var kl = o::mean(kl_term(tape, policy, reference, seqs));
  Var objective = o::sub(surr, o::scale(kl, beta_kl));
  PeSurrogate out;
  out.objective = objective.item();
  out.kl = kl.item();
  std::size_t clipped = 0;
  for (double r : ratio.value().values) clipped += std::abs(r - 1.0) > clip;
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(seqs.size());
  out.loss = o::neg(objective);
  return out;
}

double mean_expected_kl(const EnhancerPolicy& policy, const EnhancerPolicy& reference,
                        std::span<const int> prompt_ids) {
  double kl = 0.0;
  for (int p : prompt_ids) kl += expected_kl(policy, reference, p);
  return prompt_ids.empty() ? 0.0 : kl / static_cast<double>(prompt_ids.size());
}

PeResult pe_grpo_train(const EnhancerPolicy& init, const gen::FlowNet& generator,
                       const flow::NoiseSchedule& schedule, const ModifierVocab& vocab,
                       const gen::PromptSet& prompts, std::span<const int> prompt_ids,
                       const rw::NormStats& stats, const PeConfig& config, std::uint64_t seed,
                       const PeLogger& log) {
  config.validate();
  if (init.config().vocab_size != vocab.size()) throw std::invalid_argument("pe_grpo_train: vocab size mismatch");
  if (prompt_ids.empty()) throw std::invalid_argument("pe_grpo_train: no prompts");
  const EnhancerPolicy reference = init;
  PeResult res{init, {}, 0.0};
  EnhancerPolicy& policy = res.policy;
  AdamState adam(AdamConfig{config.lr});

  for (std::size_t it = 0; it < config.iterations; ++it) {
    PeIterationStats st;
    st.iteration = it;
    const std::string tag = "pe:" + std::to_string(it);
    std::vector<EnhancedPrompt> all;
    std::vector<double> adv;
    for (std::size_t g = 0; g < prompt_ids.size(); ++g) {
      const int p = prompt_ids[g];
      std::vector<double> rewards;
      for (std::size_t i = 0; i < config.group_size; ++i) {
        RngStream pick(seed, tag, g, i);
        EnhancedPrompt e = sample_enhanced(policy, p, pick);
        RngStream noise(seed, tag + ":outcome", g);
        const Outcome oc = pe_outcome_reward(generator, schedule, vocab, prompts, stats, config.weights,
                                             p, e.tokens, config.samples, noise, config.vagueness);
        const double structure = structure_reward(e.tokens, policy.config().max_len);
        rewards.push_back(oc.value + config.weights.structure * structure);
        st.mean_outcome += oc.value;
        st.mean_alignment_z += oc.alignment_z;
        st.mean_aesthetic_z += oc.aesthetic_z;
        st.structure_valid += structure;
        all.push_back(std::move(e));
      }
      for (double r : rewards) st.mean_reward += r;
      const auto a = grpo::compute_advantages(rewards, config.eps_std);
      adv.insert(adv.end(), a.begin(), a.end());
    }
    const double n = static_cast<double>(all.size());
    st.mean_reward /= n;
    st.mean_outcome /= n;
    st.mean_alignment_z /= n;
    st.mean_aesthetic_z /= n;
    st.structure_valid /= n;

    Tape tape;
    PeSurrogate s = pe_surrogate(tape, policy, reference, all, adv, config.clip, config.beta_kl);
    if (!std::isfinite(s.loss.item())) {
      throw std::runtime_error("pe_grpo_train: non-finite loss at iteration " + std::to_string(it));
    }
    st.kl_sampled = s.kl;
    st.kl = mean_expected_kl(policy, reference, prompt_ids);
    st.clip_fraction = s.clip_fraction;
    backward(s.loss, policy.params());
    st.grad_norm = policy.params().grad_norm();
    adam_step(policy.params(), adam);
    policy.params().clear_grads();
    res.history.push_back(st);
    if (log) log(st);
  }
  res.final_kl = mean_expected_kl(policy, reference, prompt_ids);
  return res;
}

}  // namespace fgpl::pe
