#include "fgpl/ardistill/distill.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fgpl/diffcore/adam.hpp"
#include "fgpl/diffcore/ops.hpp"
#include "fgpl/flowsde/sampler.hpp"
#include "fgpl/genmodel/training.hpp"

namespace fgpl::ard {

namespace o = fgpl::ops;

flow::VelocityFn Teacher::velocity_fn(std::vector<int> prompts) const {
  return [vel = velocity, prompts = std::move(prompts)](const Tensor& x, double t) {
    const std::vector<double> ts(x.rows(), t);
    return vel(x, ts, prompts);
  };
}

Teacher teacher_from_flow(const gen::FlowNet& net) {
  Teacher t;
  t.dim = net.config().state_dim;
  t.num_prompts = net.config().num_prompts;
  t.velocity = [&net](const Tensor& x, std::span<const double> ts, std::span<const int> prompts) {
    Tape tape(false);
    return net.velocity(tape, tape.constant(x), ts, prompts).value();
  };
  return t;
}

Teacher teacher_from_oracle(const flow::GaussianOracle& oracle) {
  Teacher t;
  t.dim = oracle.dim();
  t.num_prompts = 1;
  t.velocity = [oracle](const Tensor& x, std::span<const double> ts, std::span<const int>) {
    const std::size_t d = oracle.dim();
    Tensor out = Tensor::zeros({x.rows(), d});
    for (std::size_t b = 0; b < x.rows(); ++b) {
      Eigen::Map<const Eigen::VectorXd> row(&x.values[b * d], static_cast<Eigen::Index>(d));
      const Eigen::VectorXd v = oracle.velocity(row, ts[b]);
      for (std::size_t j = 0; j < d; ++j) out.values[b * d + j] = v[static_cast<Eigen::Index>(j)];
    }
    return out;
  };
  return t;
}

Tensor score_from_velocity(const Tensor& x, std::span<const double> t, const Tensor& v) {
  const std::size_t d = x.cols();
  Tensor s = Tensor::zeros(x.shape);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = b * d + j;
      s.values[i] = -(x.values[i] + (1.0 - t[b]) * v.values[i]) / t[b];
    }
  }
  return s;
}

DmdNoise draw_dmd_noise(std::size_t batch, std::size_t dim, std::span<const int> prompt_pool,
                        const flow::NoiseSchedule& schedule, RngStream& rng) {
  if (prompt_pool.empty()) throw std::invalid_argument("draw_dmd_noise: empty prompt pool");
  if (schedule.steps < 2) throw std::invalid_argument("draw_dmd_noise: grid has no interior");
  DmdNoise n;
  n.eps = Tensor::matrix(batch, dim, rng.gaussian(batch * dim));
  n.z = Tensor::zeros({batch, dim});
  for (std::size_t b = 0; b < batch; ++b) {
    n.prompts.push_back(prompt_pool[rng.uniform_index(prompt_pool.size())]);
    n.t.push_back(schedule.time(1 + rng.uniform_index(schedule.steps - 1)));
    rng.fill_gaussian(std::span<double>(&n.z.values[b * dim], dim));
  }
  return n;
}

Var interpolate(Tape& tape, Var x, std::span<const double> t, const Tensor& z) {
  Tensor keep = Tensor::zeros(z.shape), add = z;
  const std::size_t d = z.cols();
  for (std::size_t b = 0; b < z.rows(); ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      keep.values[b * d + j] = 1.0 - t[b];
      add.values[b * d + j] *= t[b];
    }
  }
  return o::add(o::mul(x, tape.constant(std::move(keep))), tape.constant(std::move(add)));
}

namespace {

void check_modes(const Student& student, const Teacher& teacher, const Teacher& fake) {
  if (teacher.dim != fake.dim || teacher.num_prompts != fake.num_prompts) {
    throw std::invalid_argument("teacher and fake score disagree: dim " +
                                std::to_string(teacher.dim) + " vs " + std::to_string(fake.dim) +
                                ", prompts " + std::to_string(teacher.num_prompts) + " vs " +
                                std::to_string(fake.num_prompts));
  }
  if (teacher.dim != student.config().dim() ||
      teacher.num_prompts != student.config().num_prompts) {
    throw std::invalid_argument("student does not match the teacher's dimension or prompts");
  }
}

double mean_row_norm(const Tensor& t) {
  const std::size_t d = t.cols();
  double acc = 0.0;
  for (std::size_t b = 0; b < t.rows(); ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += t.values[b * d + j] * t.values[b * d + j];
    acc += std::sqrt(s);
  }
  return acc / static_cast<double>(t.rows());
}

bool finite_params(const ParamStore& store) {
  for (const auto& [_, t] : store)
    for (double v : t.values)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

Tensor dmd_signal(const Student& student, const Teacher& teacher, const Teacher& fake,
                  const DmdNoise& noise, bool normalize) {
  check_modes(student, teacher, fake);
  Tape tape(false);
  Var x = student.generate(tape, tape.constant(noise.eps), noise.prompts);
  const Tensor xt = interpolate(tape, x, noise.t, noise.z).value();
  const Tensor v_data = teacher.velocity(xt, noise.t, noise.prompts);
  const Tensor s_data = score_from_velocity(xt, noise.t, v_data);
  const Tensor s_gen = score_from_velocity(xt, noise.t, fake.velocity(xt, noise.t, noise.prompts));
  Tensor diff = s_gen;
  for (std::size_t i = 0; i < diff.values.size(); ++i) diff.values[i] -= s_data.values[i];
  if (!normalize) return diff;
  const std::size_t d = xt.cols();
  const auto& xv = x.value().values;
  for (std::size_t b = 0; b < xt.rows(); ++b) {
    double gap = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = b * d + j;
      gap += std::abs(xv[i] - (xt.values[i] - noise.t[b] * v_data.values[i]));
    }
    const double w = 1.0 / (gap / static_cast<double>(d) + 1e-8);
    for (std::size_t j = 0; j < d; ++j) diff.values[b * d + j] *= w;
  }
  return diff;
}

Var dmd_pseudo_objective(Tape& tape, const Student& student, const DmdNoise& noise,
                         const Tensor& signal) {
  Var x = student.generate(tape, tape.constant(noise.eps), noise.prompts);
  Var xt = interpolate(tape, x, noise.t, noise.z);
  return o::mean(o::row_sum(o::mul(tape.constant(signal), xt)));
}

double dmd_grad(Student& student, const Teacher& teacher, const Teacher& fake,
                const DmdNoise& noise, bool normalize) {
  const Tensor signal = dmd_signal(student, teacher, fake, noise, normalize);
  Tape tape;
  backward(dmd_pseudo_objective(tape, student, noise, signal), student.params());
  return student.params().grad_norm();
}

void DmdConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("DmdConfig: batch must be positive");
  if (fake_ratio == 0) throw std::invalid_argument("DmdConfig: fake_ratio must be positive");
  if (!(lr_gen > 0.0) || !(lr_fake > 0.0)) {
    throw std::invalid_argument("DmdConfig: learning rates must be positive");
  }
  if (!(regression_weight >= 0.0) || !std::isfinite(regression_weight)) {
    throw std::invalid_argument("DmdConfig: regression_weight must be finite and nonnegative");
  }
}

DmdResult train_dmd(const Student& student, const Teacher& teacher, const gen::FlowNet& fake_init,
                    std::span<const int> prompt_pool, const flow::NoiseSchedule& schedule,
                    const DmdConfig& config, std::uint64_t seed, const std::string& tag,
                    const DmdLogger& log, const OdePairs* anchor) {
  config.validate();
  if (config.regression_weight > 0 && (anchor == nullptr || anchor->size() == 0)) {
    throw std::invalid_argument("train_dmd: regression_weight needs ODE pairs");
  }
  DmdResult res{student, fake_init, {}, DistillStatus::Completed, {}};
  Student& g = res.student;
  gen::FlowNet& fake = res.fake;
  const Teacher fake_t = teacher_from_flow(fake);
  check_modes(g, teacher, fake_t);
  if (prompt_pool.empty()) throw std::invalid_argument("train_dmd: empty prompt pool");

  const std::size_t dim = g.config().dim();
  AdamState gen_opt({config.lr_gen}), fake_opt({config.lr_fake});
  std::uint64_t fake_count = 0;

  // One flow-matching step of the fake score on fresh generator output.
  auto fake_update = [&]() {
    RngStream rng(seed, tag + ":fake", fake_count++);
    std::vector<int> prompts(config.batch);
    for (auto& p : prompts) p = prompt_pool[rng.uniform_index(prompt_pool.size())];
    const Tensor x = g.generate(Tensor::matrix(config.batch, dim, rng.gaussian(config.batch * dim)),
                                prompts);
    Tape tape;
    Var loss = gen::flow_matching_loss(tape, fake, x, prompts, rng);
    backward(loss, fake.params());
    fake.params().clip_grad_norm(config.grad_clip);
    adam_step(fake.params(), fake_opt);
    return loss.item();
  };

  for (std::size_t w = 0; w < config.fake_warmup; ++w) {
    if (!std::isfinite(fake_update())) {
      res.status = DistillStatus::Diverged;
      res.message = tag + ": fake score diverged during warmup";
      res.fake = fake_init;
      return res;
    }
  }

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const ParamStore good_g = g.params(), good_f = fake.params();
    DmdStep step;
    step.iteration = it;
    for (std::size_t k = 0; k < config.fake_ratio; ++k) step.fake_loss += fake_update();
    step.fake_loss /= static_cast<double>(config.fake_ratio);
    step.fake_updates = config.fake_ratio;

    RngStream rng(seed, tag + ":gen", it);
    const DmdNoise noise = draw_dmd_noise(config.batch, dim, prompt_pool, schedule, rng);
    const Tensor signal = dmd_signal(g, teacher, fake_t, noise, config.normalize);
    step.signal_norm = mean_row_norm(signal);
    {
      Tape tape;
      Var objective = dmd_pseudo_objective(tape, g, noise, signal);
      if (config.regression_weight > 0) {
        std::vector<std::size_t> rows(config.batch);
        for (auto& r : rows) r = rng.uniform_index(anchor->size());
        objective = ops::add(objective, ops::scale(regression_loss(tape, g, *anchor, rows),
                                                   config.regression_weight));
      }
      backward(objective, g.params());
    }
    step.gen_grad_norm = g.params().clip_grad_norm(config.grad_clip);
    if (config.lr_decay) {
      gen_opt.config.lr = config.lr_gen * (1.0 - static_cast<double>(it) /
                                                     static_cast<double>(config.iterations));
    }
    if (std::isfinite(step.gen_grad_norm)) adam_step(g.params(), gen_opt);

    if (!std::isfinite(step.fake_loss) || !std::isfinite(step.gen_grad_norm) ||
        !finite_params(g.params()) || !finite_params(fake.params())) {
      g.params() = good_g;
      fake.params() = good_f;
      res.status = DistillStatus::Diverged;
      res.message = tag + ": non-finite update at iteration " + std::to_string(it);
      return res;
    }
    res.history.push_back(step);
    if (log && (it % config.log_every == 0 || it + 1 == config.iterations)) log(step);
  }
  return res;
}

DmdResult stage1_dmd(const Student& init, const Teacher& teacher, const gen::FlowNet& fake_init,
                     std::span<const int> prompt_pool, const flow::NoiseSchedule& schedule,
                     const DmdConfig& config, std::uint64_t seed, const DmdLogger& log) {
  if (init.config().mode != MaskMode::Bidirectional) {
    throw std::logic_error("stage 1 trains a bidirectional student");
  }
  if (config.regression_warmup == 0 && config.regression_weight == 0) {
    return train_dmd(init, teacher, fake_init, prompt_pool, schedule, config, seed, "stage1", log);
  }
  const OdePairs pairs =
      collect_ode_pairs(teacher, schedule, prompt_pool, config.warmup_pairs, seed, "stage1:pairs");
  Student warm = init;
  if (config.regression_warmup > 0) {
    RegressionConfig rc;
    rc.steps = config.regression_warmup;
    warm = regress_onto_pairs(init, pairs, rc, seed, "stage1:warm").student;
  }
  return train_dmd(warm, teacher, fake_init, prompt_pool, schedule, config, seed, "stage1", log,
                   &pairs);
}

OdePairs collect_ode_pairs(const Teacher& teacher, const flow::NoiseSchedule& schedule,
                           std::span<const int> prompt_pool, std::size_t n, std::uint64_t seed,
                           const std::string& tag) {
  if (prompt_pool.empty()) throw std::invalid_argument("collect_ode_pairs: empty prompt pool");
  const std::size_t d = teacher.dim;
  OdePairs pairs;
  pairs.dim = d;
  pairs.noise = Tensor::zeros({n, d});
  pairs.sample = Tensor::zeros({n, d});
  for (std::size_t j = 0; j < n; ++j) {
    pairs.prompts.push_back(prompt_pool[j % prompt_pool.size()]);
    RngStream rng(seed, tag, j);
    rng.fill_gaussian(std::span<double>(&pairs.noise.values[j * d], d));
  }
  // Batch per prompt; rows are independent so batching does not change values.
  for (int p : prompt_pool) {
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < n; ++j)
      if (pairs.prompts[j] == p) rows.push_back(j);
    if (rows.empty()) continue;
    Tensor x = Tensor::zeros({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(&pairs.noise.values[rows[r] * d], d, &x.values[r * d]);
    const Tensor y =
        flow::sample_ode(teacher.velocity_fn(std::vector<int>(rows.size(), p)), schedule, x);
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(&y.values[r * d], d, &pairs.sample.values[rows[r] * d]);
  }
  return pairs;
}

Var regression_loss(Tape& tape, const Student& student, const OdePairs& pairs,
                    std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("regression_loss: empty batch");
  const std::size_t d = pairs.dim;
  Tensor eps = Tensor::zeros({rows.size(), d}), target = Tensor::zeros({rows.size(), d});
  std::vector<int> prompts;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(&pairs.noise.values[rows[r] * d], d, &eps.values[r * d]);
    std::copy_n(&pairs.sample.values[rows[r] * d], d, &target.values[r * d]);
    prompts.push_back(pairs.prompts[rows[r]]);
  }
  Var e = tape.constant(std::move(eps));
  Var out = student.config().mode == MaskMode::BlockCausal
                ? student.teacher_forced(tape, e, prompts, target)
                : student.generate(tape, e, prompts);
  return o::mean(o::square(o::sub(out, tape.constant(target))));
}

RegressionResult stage2_causal_regression(const Student& student, const OdePairs& pairs,
                                          const RegressionConfig& config, std::uint64_t seed,
                                          const std::function<void(const RegressionPoint&)>& log) {
  if (student.config().mode != MaskMode::BlockCausal) {
    throw std::logic_error("stage 2 requires a block-causal student");
  }
  return regress_onto_pairs(student, pairs, config, seed, "stage2", log);
}

RegressionResult regress_onto_pairs(const Student& student, const OdePairs& pairs,
                                    const RegressionConfig& config, std::uint64_t seed,
                                    const std::string& tag,
                                    const std::function<void(const RegressionPoint&)>& log) {
  if (pairs.size() == 0) throw std::invalid_argument(tag + ": no ODE pairs");
  RegressionResult res{student, 0.0, 0.0, {}};
  std::vector<std::size_t> all(pairs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto full_loss = [&]() {
    Tape tape(false);
    return regression_loss(tape, res.student, pairs, all).item();
  };
  res.initial_loss = full_loss();

  AdamState opt({config.lr});
  const std::size_t batch = std::min(config.batch, pairs.size());
  for (std::size_t step = 0; step < config.steps; ++step) {
    RngStream rng(seed, tag, step);
    std::vector<std::size_t> rows(batch);
    for (auto& r : rows) r = rng.uniform_index(pairs.size());
    Tape tape;
    Var loss = regression_loss(tape, res.student, pairs, rows);
    if (!std::isfinite(loss.item())) throw gen::TrainingDiverged(tag, step, loss.item());
    backward(loss, res.student.params());
    res.student.params().clip_grad_norm(config.grad_clip);
    adam_step(res.student.params(), opt);
    if (step % config.log_every == 0 || step + 1 == config.steps) {
      res.history.push_back({step, loss.item()});
      if (log) log(res.history.back());
    }
  }
  res.final_loss = full_loss();
  return res;
}

Student causal_init(const Student& stage1, std::uint64_t seed, std::size_t* copied) {
  StudentConfig cfg = stage1.config();
  cfg.mode = MaskMode::BlockCausal;
  Student s(cfg, seed);
  const std::size_t n = s.params().copy_matching(stage1.params());
  if (copied) *copied = n;
  return s;
}

DmdResult stage3_self_forcing(const Student& stage2, const Teacher& teacher,
                              const gen::FlowNet& fake_init, std::span<const int> prompt_pool,
                              const flow::NoiseSchedule& schedule, const DmdConfig& config,
                              std::uint64_t seed, const DmdLogger& log, const OdePairs* anchor) {
  if (stage2.config().mode != MaskMode::BlockCausal) {
    throw std::logic_error("stage 3 requires a block-causal student");
  }
  return train_dmd(stage2, teacher, fake_init, prompt_pool, schedule, config, seed, "stage3", log,
                   anchor);
}

double fit_slope(std::span<const double> y) {
  const double n = static_cast<double>(y.size());
  if (y.size() < 2) throw std::invalid_argument("fit_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mx += static_cast<double>(i);
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = static_cast<double>(i) - mx;
    sxy += dx * (y[i] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ExposureReport exposure_bias(const Student& student, const gen::PromptSet& prompts,
                             std::span<const int> prompt_ids, std::size_t n, std::uint64_t seed) {
  if (prompt_ids.empty() || n == 0) throw std::invalid_argument("exposure_bias: nothing to roll out");
  const std::size_t f = student.config().frames;
  if (f < 3) throw std::invalid_argument("exposure_bias: needs at least three frames");
  ExposureReport rep;
  rep.frame_error.assign(f, 0.0);
  std::size_t count = 0;
  for (int p : prompt_ids) {
    const auto& dyn = prompts.at(p).dynamics;
    if (!dyn) throw std::invalid_argument("exposure_bias: prompt has no dynamics");
    for (std::size_t j = 0; j < n; ++j) {
      RngStream rng(seed, "exposure", static_cast<std::uint64_t>(p), j);
      const auto dev = dyn->frame_deviation(self_forcing_rollout(student, p, rng));
      for (std::size_t i = 0; i < f; ++i) rep.frame_error[i] += dev[i];
      ++count;
    }
  }
  for (double& e : rep.frame_error) e /= static_cast<double>(count);
  rep.slope = fit_slope(std::span<const double>(rep.frame_error).subspan(1));
  return rep;
}

std::string exposure_csv(std::span<const std::string> labels,
                         std::span<const ExposureReport> reports) {
  if (labels.size() != reports.size() || reports.empty()) {
    throw std::invalid_argument("exposure_csv: one label per report required");
  }
  std::ostringstream out;
  out.precision(10);
  out << "frame";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  const std::size_t f = reports[0].frame_error.size();
  for (std::size_t i = 0; i < f; ++i) {
    out << i;
    for (const auto& r : reports) out << ',' << r.frame_error.at(i);
    out << '\n';
  }
  out << "slope";
  for (const auto& r : reports) out << ',' << r.slope;
  out << '\n';
  return out.str();
}

Tensor student_samples(const Student& student, const OdePairs& pairs) {
  return student.generate(pairs.noise, pairs.prompts);
}

}  // namespace fgpl::ard
