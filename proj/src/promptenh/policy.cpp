#include "fgpl/promptenh/policy.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "fgpl/diffcore/ops.hpp"
#include "fgpl/genmodel/flow_net.hpp"

namespace fgpl::pe {

namespace o = fgpl::ops;

EnhancerPolicy::EnhancerPolicy(EnhancerConfig config, std::uint64_t seed) : cfg_(config) {
  if (cfg_.vocab_size < 2 || cfg_.max_len == 0) throw std::invalid_argument("EnhancerPolicy: bad config");
  RngStream rng(seed, "init:enhancer");
  params_.add("pe/ctx_emb", Tensor::matrix(cfg_.num_prompts, cfg_.ctx_dim,
                                           rng.gaussian(cfg_.num_prompts * cfg_.ctx_dim)));
  params_.add("pe/pos_emb", Tensor::matrix(cfg_.max_len, cfg_.pos_dim,
                                           rng.gaussian(cfg_.max_len * cfg_.pos_dim)));
  const std::vector<std::size_t> widths = {cfg_.ctx_dim + cfg_.pos_dim + cfg_.vocab_size,
                                           cfg_.hidden, cfg_.vocab_size};
  gen::init_mlp(params_, "pe/mlp", widths, rng, 0.1);
}

EnhancerPolicy::EnhancerPolicy(EnhancerConfig config, ParamStore params)
    : cfg_(config), params_(std::move(params)) {
  check_params();
}

void EnhancerPolicy::check_params() const {
  if (params_.get("pe/ctx_emb").shape != Shape{cfg_.num_prompts, cfg_.ctx_dim} ||
      params_.get("pe/pos_emb").shape != Shape{cfg_.max_len, cfg_.pos_dim} ||
      params_.get("pe/mlp/l1.w").shape != Shape{cfg_.vocab_size, cfg_.hidden}) {
    throw std::invalid_argument("EnhancerPolicy: parameters do not match config");
  }
}

Var EnhancerPolicy::logits(Tape& tape, std::span<const int> prompts, std::span<const int> positions,
                           std::span<const std::vector<int>> prefixes) const {
  const std::size_t n = prompts.size(), k = cfg_.vocab_size;
  Tensor hot = Tensor::zeros({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    for (int t : prefixes[r]) {
      if (t < 0 || static_cast<std::size_t>(t) >= k) throw std::out_of_range("unknown modifier token id");
      hot.values[r * k + t] = 1.0;
    }
  }
  Var ctx = o::gather_rows(tape.param(params_, "pe/ctx_emb"), prompts);
  Var pos = o::gather_rows(tape.param(params_, "pe/pos_emb"), positions);
  return gen::apply_mlp(tape, params_, "pe/mlp", 2, o::concat_cols({ctx, pos, tape.constant(std::move(hot))}));
}

std::vector<double> EnhancerPolicy::next_log_probs(int prompt, std::span<const int> prefix) const {
  if (prefix.size() >= cfg_.max_len) throw std::out_of_range("next_log_probs: prefix at max length");
  Tape tape(false);
  const int pos = static_cast<int>(prefix.size());
  const std::vector<std::vector<int>> pre = {{prefix.begin(), prefix.end()}};
  return o::log_softmax_rows(logits(tape, std::span(&prompt, 1), std::span(&pos, 1), pre)).value().values;
}

namespace {

EnhancedPrompt finish(EnhancedPrompt e, std::size_t max_len) {
  e.structure_valid = structure_reward(e.tokens, max_len) == 1.0;
  return e;
}

}  // namespace

EnhancedPrompt sample_enhanced(const EnhancerPolicy& policy, int prompt, RngStream& stream) {
  EnhancedPrompt e;
  e.prompt = prompt;
  while (e.tokens.size() < policy.config().max_len) {
    const auto lp = policy.next_log_probs(prompt, e.tokens);
    std::vector<double> p(lp.size());
    std::transform(lp.begin(), lp.end(), p.begin(), [](double v) { return std::exp(v); });
    const int tok = static_cast<int>(stream.categorical(p));
    e.logp += lp[tok];
    e.tokens.push_back(tok);
    if (tok == kEnd) break;
  }
  return finish(std::move(e), policy.config().max_len);
}

EnhancedPrompt greedy_enhanced(const EnhancerPolicy& policy, int prompt) {
  EnhancedPrompt e;
  e.prompt = prompt;
  while (e.tokens.size() < policy.config().max_len) {
    const auto lp = policy.next_log_probs(prompt, e.tokens);
    const int tok = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    e.logp += lp[tok];
    e.tokens.push_back(tok);
    if (tok == kEnd) break;
  }
  return finish(std::move(e), policy.config().max_len);
}

double sequence_logprob(const EnhancerPolicy& policy, int prompt, std::span<const int> y) {
  double lp = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lp += policy.next_log_probs(prompt, y.first(i))[y[i]];
  return lp;
}

namespace {

// One row per (sequence, position) up to max_len; positions past the end of
// a sequence are padding and get mask 0.
struct Rows {
  std::vector<int> prompts, positions, tokens;
  std::vector<std::vector<int>> prefixes;
  Tensor mask;
};

Rows expand(const EnhancerConfig& cfg, std::span<const EnhancedPrompt> seqs) {
  const std::size_t l = cfg.max_len;
  Rows r;
  r.mask = Tensor::zeros({seqs.size(), l});
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const auto& y = seqs[s].tokens;
    if (y.size() > l) throw std::invalid_argument("sequence longer than max_len");
    for (std::size_t i = 0; i < l; ++i) {
      const bool real = i < y.size();
      r.prompts.push_back(seqs[s].prompt);
      r.positions.push_back(static_cast<int>(i));
      r.tokens.push_back(real ? y[i] : kEnd);
      r.prefixes.emplace_back(y.begin(), y.begin() + std::min(i, y.size()));
      r.mask.values[s * l + i] = real ? 1.0 : 0.0;
    }
  }
  return r;
}

}  // namespace

Var sequence_logprob(Tape& tape, const EnhancerPolicy& policy, std::span<const EnhancedPrompt> seqs) {
  const Rows r = expand(policy.config(), seqs);
  Var lp = o::pick(o::log_softmax_rows(policy.logits(tape, r.prompts, r.positions, r.prefixes)), r.tokens);
  Var per = o::reshape(lp, {seqs.size(), policy.config().max_len});
  return o::row_sum(o::mul(per, tape.constant(r.mask)));
}

bool well_formed(std::span<const int> y) {
  if (y.empty() || y.back() != kEnd) return false;
  std::set<int> seen;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    if (y[i] == kEnd || !seen.insert(y[i]).second) return false;
  }
  return true;
}

double structure_reward(std::span<const int> y, std::size_t max_len) {
  return y.size() <= max_len && well_formed(y) ? 1.0 : 0.0;
}

double structure_reward_graded(std::span<const int> y, std::size_t max_len) {
  double penalty = 0.0;
  if (y.empty() || y.size() > max_len) penalty += 0.25;
  if (y.empty() || y.back() != kEnd) penalty += 0.25;
  std::set<int> seen;
  for (int t : y)
    if (t != kEnd && !seen.insert(t).second) penalty += 0.25;
  return std::max(0.0, 1.0 - penalty);
}

double categorical_kl(std::span<const double> logits_p, std::span<const double> logits_q) {
  if (logits_p.size() != logits_q.size() || logits_p.empty()) {
    throw std::invalid_argument("categorical_kl: size mismatch");
  }
  auto lse = [](std::span<const double> x) {
    const double m = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (double v : x) z += std::exp(v - m);
    return m + std::log(z);
  };
  const double zp = lse(logits_p), zq = lse(logits_q);
  double kl = 0.0;
  for (std::size_t i = 0; i < logits_p.size(); ++i) {
    const double lp = logits_p[i] - zp, lq = logits_q[i] - zq;
    kl += std::exp(lp) * (lp - lq);
  }
  return std::max(kl, 0.0);
}

double kl_term(const EnhancerPolicy& policy, const EnhancerPolicy& reference, int prompt,
               std::span<const int> y) {
  double kl = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    kl += categorical_kl(policy.next_log_probs(prompt, y.first(i)),
                         reference.next_log_probs(prompt, y.first(i)));
  }
  return kl;
}

namespace {

double expected_kl_from(const EnhancerPolicy& policy, const EnhancerPolicy& reference, int prompt,
                        std::vector<int>& prefix) {
  const auto lp = policy.next_log_probs(prompt, prefix);
  const auto lq = reference.next_log_probs(prompt, prefix);
  double kl = categorical_kl(lp, lq);
  if (prefix.size() + 1 == policy.config().max_len) return kl;
  for (std::size_t t = 1; t < lp.size(); ++t) {
    const double p = std::exp(lp[t]);
    if (p < 1e-12) continue;
    prefix.push_back(static_cast<int>(t));
    kl += p * expected_kl_from(policy, reference, prompt, prefix);
    prefix.pop_back();
  }
  return kl;
}

}  // namespace

double expected_kl(const EnhancerPolicy& policy, const EnhancerPolicy& reference, int prompt) {
  std::vector<int> prefix;
  return expected_kl_from(policy, reference, prompt, prefix);
}

Var kl_term(Tape& tape, const EnhancerPolicy& policy, const EnhancerPolicy& reference,
            std::span<const EnhancedPrompt> seqs) {
  const Rows r = expand(policy.config(), seqs);
  Tape ref_tape(false);
  Tensor ref_lp = o::log_softmax_rows(reference.logits(ref_tape, r.prompts, r.positions, r.prefixes)).value();
  Var lp = o::log_softmax_rows(policy.logits(tape, r.prompts, r.positions, r.prefixes));
  Var per_pos = o::row_sum(o::mul(o::exp(lp), o::sub(lp, tape.constant(std::move(ref_lp)))));
  Var per = o::reshape(per_pos, {seqs.size(), policy.config().max_len});
  return o::row_sum(o::mul(per, tape.constant(r.mask)));
}

}  // namespace fgpl::pe
