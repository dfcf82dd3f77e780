#include "fgpl/grpoflow/grpo.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "fgpl/diffcore/ops.hpp"

namespace fgpl::grpo {

namespace o = fgpl::ops;

std::vector<std::size_t> assign_isotemporal(std::size_t groups, const NoiseSchedule& schedule,
                                            std::size_t iteration, bool cycle) {
  const auto eligible = schedule.eligible_indices();
  const std::size_t m = eligible.size();
  if (m == 0) throw std::invalid_argument("assign_isotemporal: no eligible grid indices");
  if (groups > m && !cycle) {
    throw std::invalid_argument("assign_isotemporal: " + std::to_string(groups) +
                                " groups exceed " + std::to_string(m) + " eligible indices");
  }
  std::vector<std::size_t> out(groups);
  for (std::size_t g = 0; g < groups; ++g) out[g] = eligible[(g * m / groups + iteration) % m];
  return out;
}

std::vector<double> compute_advantages(std::span<const double> rewards, double eps_std) {
  if (rewards.size() < 2) throw std::invalid_argument("compute_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(rewards.size(), 0.0);
  if (sd < eps_std) return a;
  for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = (rewards[i] - mean) / sd;
  return a;
}

std::vector<RolloutGroup> rollout_groups(const FlowNet& model, const NoiseSchedule& schedule,
                                         std::span<const int> prompts,
                                         std::span<const std::size_t> indices,
                                         std::size_t group_size, std::uint64_t seed,
                                         const std::string& tag) {
  if (prompts.size() != indices.size()) throw std::invalid_argument("rollout_groups: one index per group");
  if (group_size < 2) throw std::invalid_argument("rollout_groups: group size must be at least 2");
  const std::size_t n = prompts.size() * group_size;
  std::vector<int> rows(n);
  std::vector<std::vector<std::size_t>> steps(n);
  std::vector<RngStream> streams;
  streams.reserve(n);
  for (std::size_t g = 0; g < prompts.size(); ++g) {
    for (std::size_t i = 0; i < group_size; ++i) {
      rows[g * group_size + i] = prompts[g];
      steps[g * group_size + i] = {indices[g]};
      streams.emplace_back(seed, tag, g, i);
    }
  }
  auto trajs = flow::sample_mixed_batch(model.velocity_fn(rows), schedule,
                                        model.config().state_dim, rows, steps, streams);
  std::vector<RolloutGroup> out(prompts.size());
  for (std::size_t g = 0; g < prompts.size(); ++g) {
    out[g].prompt = prompts[g];
    out[g].index = indices[g];
    for (std::size_t i = 0; i < group_size; ++i)
      out[g].members.push_back(std::move(trajs[g * group_size + i]));
  }
  return out;
}

void score_groups(std::vector<RolloutGroup>& groups, const TerminalReward& reward, double eps_std) {
  for (auto& g : groups) {
    g.rewards.clear();
    std::vector<double> agg;
    for (const auto& tr : g.members) {
      g.rewards.push_back(reward(g.prompt, tr.terminal()));
      agg.push_back(g.rewards.back().aggregate);
    }
    g.advantages = compute_advantages(agg, eps_std);
  }
}

Var transition_logprob(Tape& tape, const FlowNet& model, const NoiseSchedule& schedule,
                       std::span<const Trajectory* const> trajectories) {
  const std::size_t n = trajectories.size(), d = model.config().state_dim;
  if (n == 0) throw std::invalid_argument("transition_logprob: no trajectories");
  Tensor x = Tensor::zeros({n, d}), next = Tensor::zeros({n, d});
  std::vector<double> t(n), coef(n), scale_dt(n), coeff(n), constant(n), one_minus_t(n);
  std::vector<int> prompts(n);
  for (std::size_t r = 0; r < n; ++r) {
    const Trajectory& tr = *trajectories[r];
    const std::size_t k = tr.sde_index();
    std::copy(tr.states[k].begin(), tr.states[k].end(), x.values.begin() + r * d);
    std::copy(tr.states[k + 1].begin(), tr.states[k + 1].end(), next.values.begin() + r * d);
    t[r] = schedule.time(k);
    const double s = flow::sigma(schedule, t[r]);
    const double std = s * std::sqrt(schedule.dt());
    coef[r] = s * s / (2.0 * t[r]);
    one_minus_t[r] = 1.0 - t[r];
    coeff[r] = flow::gaussian_logprob_coeff(std);
    constant[r] = flow::gaussian_logprob_const(std, d);
    prompts[r] = tr.prompt;
  }
  // Per-row scalars are broadcast as [n, d] constants so every product below
  // matches the sampler's arithmetic bit for bit.
  auto bcast = [&](const std::vector<double>& per_row) {
    Tensor b = Tensor::zeros({n, d});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) b.values[r * d + j] = per_row[r];
    return tape.constant(std::move(b));
  };
  Var xv = tape.constant(x);
  Var v = model.velocity(tape, xv, t, prompts);
  Var corr = o::mul(o::add(xv, o::mul(v, bcast(one_minus_t))), bcast(coef));
  Var mean = o::sub(xv, o::scale(o::add(v, corr), schedule.dt()));
  Var q = o::row_sum(o::square(o::sub(tape.constant(std::move(next)), mean)));
  return o::add(o::mul(q, tape.constant(Tensor::vector(coeff))), tape.constant(Tensor::vector(constant)));
}

double policy_ratio(const FlowNet& model, const Trajectory& trajectory,
                    const NoiseSchedule& schedule) {
  if (trajectory.sde.empty()) throw std::logic_error("policy_ratio: trajectory has no kernel_old");
  Tape tape(false);
  const Trajectory* p = &trajectory;
  const double lp = transition_logprob(tape, model, schedule, std::span(&p, 1)).value().values[0];
  return std::exp(lp - trajectory.logp_old());
}

Surrogate grpo_surrogate(Tape& tape, const FlowNet& model, std::span<const RolloutGroup> groups,
                         double clip, const NoiseSchedule& schedule) {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("grpo_surrogate: clip must lie in (0, 1)");
  std::vector<const Trajectory*> trajs;
  std::vector<double> adv, logp_old;
  for (const auto& g : groups) {
    if (g.advantages.size() != g.members.size()) {
      throw std::invalid_argument("grpo_surrogate: advantages not computed");
    }
    const double t = schedule.time(g.index);
    const double lam = flow::lambda_rect(t, schedule.dt(), flow::sigma(schedule, t));
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      trajs.push_back(&g.members[i]);
      adv.push_back(g.advantages[i] / lam);
      logp_old.push_back(g.members[i].logp_old());
    }
  }
  Var logp = transition_logprob(tape, model, schedule, trajs);
  Var ratio = o::exp(o::sub(logp, tape.constant(Tensor::vector(logp_old))));

  Surrogate out;
  std::vector<int> keep;
  const auto& rv = ratio.value().values;
  for (std::size_t i = 0; i < rv.size(); ++i) {
    if (std::isfinite(rv[i])) keep.push_back(static_cast<int>(i));
  }
  out.skipped = rv.size() - keep.size();
  if (out.skipped > 0) {
    std::cerr << "warning: grpo_surrogate skipped " << out.skipped << " non-finite ratios\n";
  }
  if (keep.empty()) {
    out.loss = tape.constant(Tensor::scalar(0.0));
    return out;
  }
  std::vector<double> kept_adv;
  std::size_t clipped = 0;
  for (int i : keep) {
    kept_adv.push_back(adv[i]);
    clipped += std::abs(rv[i] - 1.0) > clip;
  }
  if (out.skipped > 0) {
    ratio = o::reshape(o::gather_rows(o::reshape(ratio, {rv.size(), 1}), keep), {keep.size()});
  }
  Var a = tape.constant(Tensor::vector(std::move(kept_adv)));
  Var term = o::minimum(o::mul(ratio, a), o::mul(o::clamp(ratio, 1.0 - clip, 1.0 + clip), a));
  Var objective = o::mean(term);
  out.objective = objective.item();
  out.loss = o::neg(objective);
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(keep.size());
  return out;
}

}  // namespace fgpl::grpo
