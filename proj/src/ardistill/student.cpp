#include "fgpl/ardistill/student.hpp"

#include <stdexcept>

#include "fgpl/diffcore/ops.hpp"
#include "fgpl/genmodel/flow_net.hpp"

namespace fgpl::ard {

namespace o = fgpl::ops;

namespace {

const std::string kMlp = "student/mlp";

std::vector<int> repeat_each(std::span<const int> v, std::size_t times) {
  std::vector<int> out;
  out.reserve(v.size() * times);
  for (int x : v)
    for (std::size_t i = 0; i < times; ++i) out.push_back(x);
  return out;
}

}  // namespace

std::string mask_name(MaskMode mode) {
  return mode == MaskMode::Bidirectional ? "bidirectional" : "block-causal";
}

void StudentConfig::validate() const {
  if (frames == 0 || frame_dim == 0 || num_prompts == 0 || steps == 0 || hidden == 0 ||
      depth == 0) {
    throw std::invalid_argument("StudentConfig: sizes must be positive");
  }
}

Student::Student(StudentConfig config, std::uint64_t seed) : cfg_(config) {
  cfg_.validate();
  init(seed);
}

Student::Student(StudentConfig config, ParamStore params)
    : cfg_(config), params_(std::move(params)) {
  cfg_.validate();
  const auto& pos = params_.get("student/pos_emb");
  if (pos.shape != Shape{cfg_.frames, cfg_.pos_dim}) {
    throw std::invalid_argument("Student: position table " + shape_str(pos.shape) +
                                " does not match config");
  }
}

void Student::init(std::uint64_t seed) {
  RngStream rng(seed, "init:student");
  params_.add("student/prompt_emb",
              Tensor::matrix(cfg_.num_prompts, cfg_.prompt_dim,
                             rng.gaussian(cfg_.num_prompts * cfg_.prompt_dim)));
  params_.add("student/pos_emb",
              Tensor::matrix(cfg_.frames, cfg_.pos_dim, rng.gaussian(cfg_.frames * cfg_.pos_dim)));
  std::vector<std::size_t> widths = {cfg_.frame_dim + cfg_.time_features + cfg_.prompt_dim +
                                     cfg_.pos_dim + cfg_.dim()};
  for (std::size_t i = 0; i < cfg_.depth; ++i) widths.push_back(cfg_.hidden);
  widths.push_back(cfg_.frame_dim);
  gen::init_mlp(params_, kMlp, widths, rng, 0.1);
}

Student Student::with_mode(MaskMode mode) const {
  StudentConfig c = cfg_;
  c.mode = mode;
  return Student(c, params_);
}

Var Student::frame_velocity(Tape& tape, Var x, std::span<const double> t,
                            std::span<const int> prompts, std::span<const int> positions,
                            Var ctx) const {
  Var tf = tape.constant(gen::time_features(t, cfg_.time_features));
  Var pe = o::gather_rows(tape.param(params_, "student/prompt_emb"), prompts);
  Var pos = o::gather_rows(tape.param(params_, "student/pos_emb"), positions);
  return gen::apply_mlp(tape, params_, kMlp, cfg_.depth + 1, o::concat_cols({x, tf, pe, pos, ctx}));
}

Var Student::denoise_frame(Tape& tape, Var eps_i, std::size_t frame,
                           std::span<const int> prompts, Var ctx) const {
  const std::size_t b = prompts.size();
  const double h = 1.0 / static_cast<double>(cfg_.steps);
  const std::vector<int> pos(b, static_cast<int>(frame));
  Var x = eps_i;
  for (std::size_t s = 0; s < cfg_.steps; ++s) {
    const std::vector<double> t(b, 1.0 - static_cast<double>(s) * h);
    x = o::sub(x, o::scale(frame_velocity(tape, x, t, prompts, pos, ctx), h));
  }
  return x;
}

Var Student::generate(Tape& tape, Var eps, std::span<const int> prompts) const {
  const std::size_t b = prompts.size(), f = cfg_.frames, d = cfg_.frame_dim;
  if (eps.shape() != Shape{b, cfg_.dim()}) {
    throw std::invalid_argument("Student::generate: noise shape " + shape_str(eps.shape()));
  }
  const double h = 1.0 / static_cast<double>(cfg_.steps);

  if (cfg_.mode == MaskMode::Bidirectional) {
    std::vector<int> owner(b);
    for (std::size_t i = 0; i < b; ++i) owner[i] = static_cast<int>(i);
    const auto row_owner = repeat_each(owner, f);
    const auto row_prompt = repeat_each(prompts, f);
    std::vector<int> row_pos(b * f);
    for (std::size_t r = 0; r < row_pos.size(); ++r) row_pos[r] = static_cast<int>(r % f);
    Var x = eps;
    for (std::size_t s = 0; s < cfg_.steps; ++s) {
      const std::vector<double> t(b * f, 1.0 - static_cast<double>(s) * h);
      Var rows = o::reshape(x, {b * f, d});
      Var ctx = o::gather_rows(x, row_owner);
      Var v = frame_velocity(tape, rows, t, row_prompt, row_pos, ctx);
      x = o::sub(x, o::scale(o::reshape(v, {b, f * d}), h));
    }
    return x;
  }

  std::vector<Var> done;
  for (std::size_t i = 0; i < f; ++i) {
    std::vector<Var> parts = done;
    parts.push_back(tape.constant(Tensor::zeros({b, (f - i) * d})));
    Var ctx = o::concat_cols(std::span<const Var>(parts));
    done.push_back(denoise_frame(tape, o::slice_cols(eps, i * d, d), i, prompts, ctx));
  }
  return o::concat_cols(std::span<const Var>(done));
}

Tensor Student::generate(const Tensor& eps, std::span<const int> prompts) const {
  Tape tape(false);
  return generate(tape, tape.constant(eps), prompts).value();
}

Var Student::teacher_forced(Tape& tape, Var eps, std::span<const int> prompts,
                            const Tensor& history) const {
  const std::size_t b = prompts.size(), f = cfg_.frames, d = cfg_.frame_dim, dim = cfg_.dim();
  if (eps.shape() != Shape{b, dim} || history.shape != Shape{b, dim}) {
    throw std::invalid_argument("Student::teacher_forced: expected [B, F·d] noise and history");
  }
  if (cfg_.mode != MaskMode::BlockCausal) {
    throw std::logic_error("teacher forcing needs a block-causal student");
  }
  Tensor ctx = Tensor::zeros({b * f, dim});
  std::vector<int> row_pos(b * f);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = 0; i < f; ++i) {
      const std::size_t r = s * f + i;
      row_pos[r] = static_cast<int>(i);
      for (std::size_t c = 0; c < i * d; ++c) ctx.values[r * dim + c] = history.values[s * dim + c];
    }
  }
  const auto row_prompt = repeat_each(prompts, f);
  Var c = tape.constant(std::move(ctx));
  const double h = 1.0 / static_cast<double>(cfg_.steps);
  Var x = o::reshape(eps, {b * f, d});
  for (std::size_t s = 0; s < cfg_.steps; ++s) {
    const std::vector<double> t(b * f, 1.0 - static_cast<double>(s) * h);
    x = o::sub(x, o::scale(frame_velocity(tape, x, t, row_prompt, row_pos, c), h));
  }
  return o::reshape(x, {b, dim});
}

FrameCache::FrameCache(std::size_t frames, std::size_t frame_dim)
    : capacity_(frames), frame_dim_(frame_dim) {}

void FrameCache::append(std::vector<double> frame) {
  if (frames_.size() >= capacity_) {
    throw std::length_error("FrameCache: already holds " + std::to_string(capacity_) + " frames");
  }
  if (frame.size() != frame_dim_) throw std::invalid_argument("FrameCache: frame size mismatch");
  frames_.push_back(std::move(frame));
}

std::vector<double> FrameCache::context() const {
  std::vector<double> ctx(capacity_ * frame_dim_, 0.0);
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    std::copy(frames_[i].begin(), frames_[i].end(), ctx.begin() + i * frame_dim_);
  }
  return ctx;
}

std::vector<double> self_forcing_rollout(const Student& student, int prompt, RngStream& stream) {
  const auto& cfg = student.config();
  if (cfg.mode != MaskMode::BlockCausal) {
    throw std::logic_error("self-forcing rollout needs a block-causal student");
  }
  FrameCache cache(cfg.frames, cfg.frame_dim);
  const int prompts[] = {prompt};
  for (std::size_t i = 0; i < cfg.frames; ++i) {
    Tape tape(false);
    Var eps = tape.constant(Tensor::matrix(1, cfg.frame_dim, stream.gaussian(cfg.frame_dim)));
    Var ctx = tape.constant(Tensor::matrix(1, cfg.dim(), cache.context()));
    Var x = student.denoise_frame(tape, eps, i, prompts, ctx);
    cache.append(x.value().values);
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < cfg.frames; ++i) {
    out.insert(out.end(), cache.at(i).begin(), cache.at(i).end());
  }
  return out;
}

ProbeReport causality_probe(const Student& student, int prompt, std::uint64_t seed) {
  const auto& cfg = student.config();
  const std::size_t d = cfg.frame_dim, dim = cfg.dim();
  RngStream rng(seed, "probe");
  Tensor eps = Tensor::matrix(1, dim, rng.gaussian(dim));
  const int prompts[] = {prompt};
  const Tensor base = student.generate(eps, prompts);

  ProbeReport report;
  report.passed = true;
  for (std::size_t j = 0; j < cfg.frames; ++j) {
    Tensor pert = eps;
    for (std::size_t c = 0; c < d; ++c) pert.values[j * d + c] += 1.0;
    const Tensor out = student.generate(pert, prompts);
    bool prefix = true, moved = false;
    for (std::size_t c = 0; c < j * d; ++c) prefix = prefix && out.values[c] == base.values[c];
    for (std::size_t c = j * d; c < (j + 1) * d; ++c) moved = moved || out.values[c] != base.values[c];
    report.prefix_unchanged.push_back(prefix);
    report.frame_changed.push_back(moved);
    report.passed = report.passed && prefix && moved;
  }
  return report;
}

}  // namespace fgpl::ard
