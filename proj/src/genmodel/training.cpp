#include "fgpl/genmodel/training.hpp"

#include <cmath>
#include <limits>

#include "fgpl/diffcore/ops.hpp"
#include "fgpl/flowsde/sampler.hpp"

namespace fgpl::gen {

namespace o = fgpl::ops;

TrainingDiverged::TrainingDiverged(const std::string& stage, std::size_t step, double loss)
    : std::runtime_error(stage + ": non-finite loss " + std::to_string(loss) + " at step " +
                         std::to_string(step)),
      step_(step) {}

Dataset generate_dataset(const PromptSet& prompts, std::size_t per_prompt, double corruption,
                         RngStream& rng, double distractor_std) {
  if (corruption < 0.0 || corruption > 1.0) {
    throw std::invalid_argument("corruption fraction must lie in [0, 1]");
  }
  Dataset d;
  d.dim = prompts.state_dim();
  for (const auto& p : prompts.all()) {
    for (std::size_t i = 0; i < per_prompt; ++i) {
      const bool bad = rng.uniform() < corruption;
      std::vector<double> x;
      if (bad) {
        x = rng.gaussian(d.dim);
        for (double& v : x) v *= distractor_std;
      } else {
        x = p.dynamics ? p.dynamics->sample(rng) : p.law.sample(rng);
      }
      d.x.insert(d.x.end(), x.begin(), x.end());
      d.prompts.push_back(p.id);
      d.corrupted.push_back(bad);
    }
  }
  return d;
}

Dataset curated_subset(const Dataset& data, const PromptSet& prompts) {
  Dataset out;
  out.dim = data.dim;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.corrupted[i] || !prompts.at(data.prompts[i]).curated) continue;
    const auto r = data.row(i);
    out.x.insert(out.x.end(), r.begin(), r.end());
    out.prompts.push_back(data.prompts[i]);
    out.corrupted.push_back(0);
  }
  if (out.size() == 0) throw std::invalid_argument("curated subset is empty");
  return out;
}

Var flow_matching_loss(Tape& tape, const FlowNet& model, const Tensor& x0,
                       std::span<const int> prompts, RngStream& rng) {
  const std::size_t batch = x0.rows(), dim = x0.cols();
  if (batch == 0 || x0.numel() == 0) throw std::invalid_argument("flow_matching_loss: empty batch");
  if (prompts.size() != batch) throw std::invalid_argument("flow_matching_loss: prompt count");
  std::vector<double> t(batch);
  Tensor xt = Tensor::zeros({batch, dim});
  Tensor target = Tensor::zeros({batch, dim});
  for (std::size_t b = 0; b < batch; ++b) {
    t[b] = rng.uniform();
    for (std::size_t j = 0; j < dim; ++j) {
      const double eps = rng.normal();
      const double x = x0.values[b * dim + j];
      xt.values[b * dim + j] = (1.0 - t[b]) * x + t[b] * eps;
      target.values[b * dim + j] = eps - x;
    }
  }
  Var v = model.velocity(tape, tape.constant(std::move(xt)), t, prompts);
  return o::mean(o::row_sum(o::square(o::sub(v, tape.constant(std::move(target))))));
}

void train_flow_matching(FlowNet& model, const Dataset& data, const TrainConfig& config,
                         std::uint64_t seed, const std::string& tag, const TrainLogger& log) {
  if (data.size() == 0) throw std::invalid_argument(tag + ": empty dataset");
  AdamState adam(AdamConfig{config.lr});
  for (std::size_t step = 0; step < config.steps; ++step) {
    RngStream rng(seed, tag, step);
    Tensor x0 = Tensor::zeros({config.batch, data.dim});
    std::vector<int> prompts(config.batch);
    for (std::size_t b = 0; b < config.batch; ++b) {
      const std::size_t i = rng.uniform_index(data.size());
      std::copy_n(&data.x[i * data.dim], data.dim, &x0.values[b * data.dim]);
      prompts[b] = data.prompts[i];
    }
    Tape tape;
    Var loss = flow_matching_loss(tape, model, x0, prompts, rng);
    const double lv = loss.item();
    if (!std::isfinite(lv)) throw TrainingDiverged(tag, step, lv);
    backward(loss, model.params());
    const double gn = model.params().clip_grad_norm(config.grad_clip);
    adam_step(model.params(), adam);
    if (log && (step % config.log_every == 0 || step + 1 == config.steps)) {
      log(TrainPoint{step, lv, gn});
    }
  }
  model.params().clear_grads();
}

FlowNet pretrain(const FlowNetConfig& net, const Dataset& data, const TrainConfig& config,
                 std::uint64_t seed, const TrainLogger& log) {
  FlowNet model(net, seed);
  train_flow_matching(model, data, config, seed, "pretrain", log);
  return model;
}

FlowNet sft(const FlowNet& pretrained, const Dataset& data, const PromptSet& prompts,
            const TrainConfig& config, std::uint64_t seed, const TrainLogger& log) {
  const Dataset curated = curated_subset(data, prompts);
  FlowNet model = pretrained;
  if (config.steps > 0) train_flow_matching(model, curated, config, seed, "sft", log);
  return model;
}

Tensor sample_prompts(const FlowNet& model, const flow::NoiseSchedule& schedule,
                      std::span<const int> prompts, std::size_t n, std::uint64_t seed,
                      const std::string& tag) {
  const std::size_t dim = model.config().state_dim;
  Tensor x = Tensor::zeros({prompts.size() * n, dim});
  std::vector<int> rows;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    RngStream rng(seed, tag, static_cast<std::uint64_t>(prompts[p]));
    rng.fill_gaussian(std::span<double>(&x.values[p * n * dim], n * dim));
    rows.insert(rows.end(), n, prompts[p]);
  }
  return flow::sample_ode(model.velocity_fn(rows), schedule, std::move(x));
}

double validity_of(const Tensor& samples, std::span<const int> prompt_of_row,
                   const PromptSet& prompts) {
  const std::size_t dim = samples.cols();
  double valid = 0.0;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    const auto& spec = prompts.at(prompt_of_row[r]);
    std::span<const double> x(&samples.values[r * dim], dim);
    if (spec.dynamics) {
      const std::size_t f = spec.dynamics->frames;
      double ok = 0.0;
      for (std::size_t i = 0; i < f; ++i) {
        ok += spec.dynamics->frame_law(i).mahalanobis(0, x.subspan(2 * i, 2)) <= 3.0;
      }
      valid += ok / static_cast<double>(f);
    } else {
      bool ok = false;
      for (std::size_t c = 0; c < spec.law.components().size() && !ok; ++c) {
        ok = spec.law.mahalanobis(c, x) <= 3.0;
      }
      valid += ok;
    }
  }
  return samples.rows() ? valid / static_cast<double>(samples.rows()) : 0.0;
}

double validity_rate(const FlowNet& model, const PromptSet& prompts,
                     std::span<const int> prompt_ids, std::size_t n,
                     const flow::NoiseSchedule& schedule, std::uint64_t seed) {
  if (n < 100) throw std::invalid_argument("validity_rate: need at least 100 samples per prompt");
  const Tensor s = sample_prompts(model, schedule, prompt_ids, n, seed, "validity");
  std::vector<int> rows;
  for (int p : prompt_ids) rows.insert(rows.end(), n, p);
  return validity_of(s, rows, prompts);
}

double conditioning_accuracy(const Tensor& samples, std::span<const int> prompt_of_row,
                             const PromptSet& prompts) {
  const std::size_t dim = samples.cols();
  double hits = 0.0;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    std::span<const double> x(&samples.values[r * dim], dim);
    const int own = prompt_of_row[r];
    const double mine = prompts.at(own).law.log_density(x);
    bool best = true;
    for (const auto& p : prompts.all()) {
      if (p.id != own && p.law.log_density(x) >= mine) best = false;
    }
    hits += best;
  }
  return samples.rows() ? hits / static_cast<double>(samples.rows()) : 0.0;
}

double mean_dynamics_deviation(const Tensor& samples, std::span<const int> prompt_of_row,
                               const PromptSet& prompts) {
  const std::size_t dim = samples.cols();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    const auto& spec = prompts.at(prompt_of_row[r]);
    if (!spec.dynamics) throw std::invalid_argument("dynamics deviation needs sequence prompts");
    for (double d : spec.dynamics->frame_deviation({&samples.values[r * dim], dim})) {
      total += d;
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace fgpl::gen
