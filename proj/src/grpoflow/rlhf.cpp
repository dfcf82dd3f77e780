#include "fgpl/grpoflow/rlhf.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fgpl/diffcore/adam.hpp"
#include "fgpl/genmodel/training.hpp"

namespace fgpl::grpo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("group size must be at least 2");
  if (groups == 0) throw std::invalid_argument("need at least one group per step");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clip must lie in (0, 1)");
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be nonnegative");
  if (inner_steps == 0) throw std::invalid_argument("inner_steps must be positive");
}

bool CollapseGuard::update(double mean_reward) {
  window_.push_back(mean_reward);
  if (window_.size() > cfg_.collapse_window) window_.erase(window_.begin());
  if (window_.size() < cfg_.collapse_window) return false;
  const double avg = std::accumulate(window_.begin(), window_.end(), 0.0) /
                     static_cast<double>(window_.size());
  if (!start_) {
    start_ = avg;
    peak_ = avg;
  }
  peak_ = std::max(peak_, avg);
  const double gain = peak_ - *start_;
  if (gain >= cfg_.collapse_min_gain && avg < peak_ - cfg_.collapse_drop * gain) {
    ++below_;
  } else {
    below_ = 0;
  }
  return below_ >= cfg_.collapse_patience;
}

RlhfResult rlhf_train(const FlowNet& sft, const gen::PromptSet& prompt_set,
                      std::span<const int> prompts, const NoiseSchedule& schedule,
                      const GrpoConfig& config, const TerminalReward& reward, std::uint64_t seed,
                      const IterationLogger& log) {
  config.validate();
  if (prompts.empty()) throw std::invalid_argument("rlhf_train: no prompts");
  RlhfResult res{sft, {}, RlhfStatus::Completed, {}};
  FlowNet& model = res.model;
  AdamState adam(AdamConfig{config.lr});
  CollapseGuard guard(config);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto indices = assign_isotemporal(config.groups, schedule, it, config.cycle_indices);
    std::vector<int> group_prompts(config.groups);
    for (std::size_t g = 0; g < config.groups; ++g)
      group_prompts[g] = prompts[(it * config.groups + g) % prompts.size()];

    // θ_old is the model as it stands now; rollouts record its kernels.
    auto groups = rollout_groups(model, schedule, group_prompts, indices, config.group_size, seed,
                                 "rlhf:" + std::to_string(it));
    score_groups(groups, reward, config.eps_std);

    IterationStats st;
    st.iteration = it;
    std::size_t count = 0;
    Tensor terminal = Tensor::zeros({config.groups * config.group_size, model.config().state_dim});
    std::vector<int> rows;
    for (const auto& g : groups) {
      for (std::size_t i = 0; i < g.members.size(); ++i) {
        st.mean_reward += g.rewards[i].aggregate;
        const auto c = g.rewards[i].components();
        for (std::size_t j = 0; j < rw::kComponents; ++j) st.mean_components[j] += c[j];
        const auto& x = g.members[i].terminal();
        std::copy(x.begin(), x.end(), terminal.values.begin() + count * x.size());
        rows.push_back(g.prompt);
        ++count;
      }
    }
    st.mean_reward /= static_cast<double>(count);
    for (double& c : st.mean_components) c /= static_cast<double>(count);
    st.validity = gen::validity_of(terminal, rows, prompt_set);

    const ParamStore last_good = model.params();
    for (std::size_t k = 0; k < config.inner_steps; ++k) {
      Tape tape;
      Surrogate s = grpo_surrogate(tape, model, groups, config.clip, schedule);
      const double lv = s.loss.item();
      if (!std::isfinite(lv)) {
        model.params() = last_good;
        res.status = RlhfStatus::Diverged;
        res.message = "non-finite GRPO loss at iteration " + std::to_string(it);
        model.params().clear_grads();
        return res;
      }
      backward(s.loss, model.params());
      const double gn = model.params().clip_grad_norm(config.grad_clip);
      adam_step(model.params(), adam);
      if (k == 0) {
        st.first_clip_fraction = s.clip_fraction;
        st.grad_norm = gn;
      }
      st.clip_fraction += s.clip_fraction / static_cast<double>(config.inner_steps);
      st.skipped += s.skipped;
    }
    model.params().clear_grads();
    res.history.push_back(st);
    if (log) log(st);
    if (guard.update(st.mean_reward)) {
      res.status = RlhfStatus::Collapsed;
      res.message = "reward collapse detected at iteration " + std::to_string(it);
      return res;
    }
  }
  return res;
}

}  // namespace fgpl::grpo
