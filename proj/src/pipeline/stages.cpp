#include "fgpl/pipeline/stages.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fgpl/ardistill/distill.hpp"
#include "fgpl/genmodel/training.hpp"
#include "fgpl/grpoflow/rlhf.hpp"
#include "fgpl/pipeline/metrics.hpp"
#include "fgpl/promptenh/train.hpp"
#include "fgpl/promptenh/vocab.hpp"
#include "fgpl/rewards/components.hpp"

namespace fgpl::pipe {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::size_t meta_size(const Checkpoint& c, const std::string& key) {
  try {
    return std::stoull(c.get(key));
  } catch (const std::logic_error&) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "bad metadata value for " + key);
  }
}

double meta_real(const Checkpoint& c, const std::string& key) {
  try {
    return std::stod(c.get(key));
  } catch (const std::logic_error&) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "bad metadata value for " + key);
  }
}

std::string join(const rw::Components& c) {
  std::string out;
  for (std::size_t i = 0; i < c.size(); ++i) out += (i ? "," : "") + fmt(c[i]);
  return out;
}

rw::Components split_components(const std::string& s) {
  rw::Components c{};
  std::istringstream in(s);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    if (i == c.size()) break;
    c[i++] = std::stod(item);
  }
  if (i != c.size()) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "expected 4 components in '" + s + "'");
  }
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

// Wall time is off by default so metrics files are reproducible.
class StageClock {
 public:
  explicit StageClock(bool record) : record_(record), start_(Clock::now()) {}
  double seconds() const {
    return record_ ? std::chrono::duration<double>(Clock::now() - start_).count() : 0.0;
  }
  double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

 private:
  bool record_;
  Clock::time_point start_;
};

MetricsRow at(std::string stage, std::size_t iter, double seconds) {
  MetricsRow r;
  r.stage = std::move(stage);
  r.iter = iter;
  r.seconds = seconds;
  return r;
}

void append_timing(const ExperimentConfig& cfg, Stage stage, double seconds) {
  std::ofstream f(fs::path(cfg.out_dir) / "timing.csv", std::ios::app);
  f << stage_name(stage) << "," << short_fmt(seconds) << "\n";
}

Checkpoint require(Stage stage, const ExperimentConfig& cfg, std::ostream& log) {
  const auto pre = prerequisite(stage);
  const std::string path = checkpoint_path(cfg, *pre);
  if (!fs::exists(path)) throw StageError("requires stage: " + stage_name(*pre));
  return load_checked(path, cfg, log);
}

std::vector<int> rows_for(std::span<const int> ids, std::size_t n) {
  std::vector<int> rows;
  for (int id : ids) rows.insert(rows.end(), n, id);
  return rows;
}

rw::NormStats fit_stats(const gen::FlowNet& model, const ExperimentConfig& cfg,
                        const gen::PromptSet& prompts) {
  const auto ids = prompts.ids();
  const Tensor ref =
      gen::sample_prompts(model, cfg.schedule, ids, cfg.stats_samples, cfg.seed, "stats");
  return rw::fit_norm_stats(rw::raw_batch(prompts, ref, rows_for(ids, cfg.stats_samples)));
}

std::size_t validity_samples(const ExperimentConfig& cfg) {
  return std::max<std::size_t>(cfg.eval.samples, 100);
}

void put_student_meta(Checkpoint& c, const ard::StudentConfig& s) {
  c.meta["student.frames"] = std::to_string(s.frames);
  c.meta["student.frame_dim"] = std::to_string(s.frame_dim);
  c.meta["student.num_prompts"] = std::to_string(s.num_prompts);
  c.meta["student.prompt_dim"] = std::to_string(s.prompt_dim);
  c.meta["student.pos_dim"] = std::to_string(s.pos_dim);
  c.meta["student.time_features"] = std::to_string(s.time_features);
  c.meta["student.hidden"] = std::to_string(s.hidden);
  c.meta["student.depth"] = std::to_string(s.depth);
  c.meta["student.steps"] = std::to_string(s.steps);
  c.meta["student.mode"] = ard::mask_name(s.mode);
}

// ---- stages ---------------------------------------------------------------

StageOutput run_pretrain(const ExperimentConfig& cfg, std::ostream& log) {
  const StageClock clock(cfg.record_wall_time);
  const auto prompts = gen::default_prompts(cfg.task);
  StageOutput out;

  RngStream rng(cfg.seed, "data");
  const auto data = gen::generate_dataset(prompts, cfg.data.per_prompt, cfg.data.corruption, rng);
  {
    ParamStore arrays;
    arrays.add("data/x", Tensor({data.size(), data.dim}, data.x));
    std::vector<double> p(data.prompts.begin(), data.prompts.end());
    std::vector<double> c(data.corrupted.begin(), data.corrupted.end());
    arrays.add("data/prompts", Tensor({data.size()}, p));
    arrays.add("data/corrupted", Tensor({data.size()}, c));
    Checkpoint ckpt = make_checkpoint("dataset", 0, cfg, std::move(arrays));
    ckpt.meta["kind"] = "dataset";
    ckpt.meta["task"] = gen::task_name(cfg.task);
    save_checkpoint(dataset_path(cfg), ckpt);
    const std::string manifest = (fs::path(cfg.out_dir) / "manifest.txt").string();
    write_text(manifest, prompts.manifest());
    out.artifacts.push_back(dataset_path(cfg));
    out.artifacts.push_back(manifest);
  }

  out.metrics = metrics_path(cfg, Stage::Pretrain);
  MetricsWriter metrics(out.metrics);
  const auto model = gen::pretrain(cfg.net, data, cfg.pretrain, cfg.seed, [&](const gen::TrainPoint& p) {
    MetricsRow row = at("pretrain", p.step, clock.seconds());
    row.grad_norm = p.grad_norm;
    metrics.append(row);
  });
  const auto ids = prompts.ids();
  MetricsRow last = at("pretrain", cfg.pretrain.steps, clock.seconds());
  last.validity = gen::validity_rate(model, prompts, ids, validity_samples(cfg), cfg.schedule, cfg.seed);
  metrics.append(last);

  Checkpoint ckpt = make_checkpoint("pretrain", cfg.pretrain.steps, cfg, model.params());
  ckpt.meta["kind"] = "flow";
  put_net_meta(ckpt, model.config());
  out.checkpoint = checkpoint_path(cfg, Stage::Pretrain);
  save_checkpoint(out.checkpoint, ckpt);
  out.artifacts.push_back(out.checkpoint);
  out.artifacts.push_back(out.metrics);
  out.summary = "pretrain: " + std::to_string(data.size()) + " samples, validity " +
                short_fmt(*last.validity);
  append_timing(cfg, Stage::Pretrain, clock.elapsed());
  (void)log;
  return out;
}

gen::Dataset load_dataset(const ExperimentConfig& cfg, std::ostream& log) {
  if (!fs::exists(dataset_path(cfg))) throw StageError("requires stage: pretrain");
  const Checkpoint c = load_checked(dataset_path(cfg), cfg, log);
  const Tensor& x = c.params.get("data/x");
  const Tensor& p = c.params.get("data/prompts");
  const Tensor& k = c.params.get("data/corrupted");
  gen::Dataset d;
  d.dim = x.shape.at(1);
  d.x = x.values;
  for (double v : p.values) d.prompts.push_back(static_cast<int>(v));
  for (double v : k.values) d.corrupted.push_back(static_cast<char>(v != 0.0));
  return d;
}

StageOutput run_sft(const ExperimentConfig& cfg, std::ostream& log) {
  const Checkpoint pre = require(Stage::Sft, cfg, log);
  const StageClock clock(cfg.record_wall_time);
  const auto prompts = gen::default_prompts(cfg.task);
  const auto data = load_dataset(cfg, log);
  const auto base = flow_from_checkpoint(pre);

  StageOutput out;
  out.metrics = metrics_path(cfg, Stage::Sft);
  MetricsWriter metrics(out.metrics);
  const auto model = gen::sft(base, data, prompts, cfg.sft, cfg.seed, [&](const gen::TrainPoint& p) {
    MetricsRow row = at("sft", p.step, clock.seconds());
    row.grad_norm = p.grad_norm;
    metrics.append(row);
  });
  const auto stats = fit_stats(model, cfg, prompts);
  rw::RewardWeights weights;
  weights.w = cfg.weights.w;
  weights.stats = stats;

  const auto ids = prompts.ids();
  const std::size_t n = validity_samples(cfg);
  const Tensor samples = gen::sample_prompts(model, cfg.schedule, ids, n, cfg.seed, "sft:check");
  const auto rows = rows_for(ids, n);
  MetricsRow last = at("sft", cfg.sft.steps, clock.seconds());
  rw::Components mean{};
  double agg = 0;
  for (const auto& c : rw::raw_batch(prompts, samples, rows)) {
    for (std::size_t j = 0; j < c.size(); ++j) mean[j] += c[j] / static_cast<double>(rows.size());
    agg += rw::aggregate(c, weights) / static_cast<double>(rows.size());
  }
  last.mean_reward = agg;
  last.r_align = mean[0];
  last.r_video = mean[1];
  last.r_image = mean[2];
  last.r_motion = mean[3];
  last.validity = gen::validity_of(samples, rows, prompts);
  metrics.append(last);

  Checkpoint ckpt = make_checkpoint("sft", cfg.sft.steps, cfg, model.params());
  ckpt.meta["kind"] = "flow";
  put_net_meta(ckpt, model.config());
  put_stats_meta(ckpt, stats);
  out.checkpoint = checkpoint_path(cfg, Stage::Sft);
  save_checkpoint(out.checkpoint, ckpt);
  out.artifacts = {out.checkpoint, out.metrics};
  out.summary = "sft: mean aggregate " + short_fmt(agg) + ", validity " + short_fmt(*last.validity);
  append_timing(cfg, Stage::Sft, clock.elapsed());
  return out;
}

StageOutput run_rlhf(const ExperimentConfig& cfg, std::ostream& log) {
  const Checkpoint sft_ckpt = require(Stage::Rlhf, cfg, log);
  const StageClock clock(cfg.record_wall_time);
  const auto prompts = gen::default_prompts(cfg.task);
  const auto sft = flow_from_checkpoint(sft_ckpt);
  rw::RewardWeights weights;
  weights.w = cfg.weights.w;
  weights.stats = stats_from_checkpoint(sft_ckpt);
  const rw::AnalyticReward reward(prompts, weights);

  StageOutput out;
  out.metrics = metrics_path(cfg, Stage::Rlhf);
  MetricsWriter metrics(out.metrics);
  const auto ids = prompts.ids();
  const auto res = grpo::rlhf_train(
      sft, prompts, ids, cfg.schedule, cfg.rlhf,
      [&](int p, std::span<const double> x) { return reward.bundle(p, x); }, cfg.seed,
      [&](const grpo::IterationStats& s) {
        MetricsRow row = at("rlhf", s.iteration, clock.seconds());
        row.mean_reward = s.mean_reward;
        row.r_align = s.mean_components[0];
        row.r_video = s.mean_components[1];
        row.r_image = s.mean_components[2];
        row.r_motion = s.mean_components[3];
        row.clip_frac = s.clip_fraction;
        row.grad_norm = s.grad_norm;
        row.validity = s.validity;
        metrics.append(row);
      });
  std::string status = "completed";
  if (res.status == grpo::RlhfStatus::Collapsed) status = "collapsed";
  if (res.status == grpo::RlhfStatus::Diverged) status = "diverged";
  if (res.status != grpo::RlhfStatus::Completed) log << "warning: rlhf " << status << ": " << res.message << "\n";

  Checkpoint ckpt = make_checkpoint("rlhf", res.history.size(), cfg, res.model.params());
  ckpt.meta["kind"] = "flow";
  ckpt.meta["status"] = status;
  put_net_meta(ckpt, res.model.config());
  put_stats_meta(ckpt, *weights.stats);
  out.checkpoint = checkpoint_path(cfg, Stage::Rlhf);
  save_checkpoint(out.checkpoint, ckpt);
  out.artifacts = {out.checkpoint, out.metrics};
  const double first = res.history.empty() ? 0.0 : res.history.front().mean_reward;
  const double final = res.history.empty() ? 0.0 : res.history.back().mean_reward;
  out.summary = "rlhf " + status + ": " + std::to_string(res.history.size()) +
                " iterations, batch reward " + short_fmt(first) + " -> " + short_fmt(final);
  append_timing(cfg, Stage::Rlhf, clock.elapsed());
  return out;
}

pe::EnhancerConfig enhancer_config(const gen::PromptSet& prompts, const pe::ModifierVocab& vocab) {
  pe::EnhancerConfig ec;
  ec.num_prompts = prompts.size();
  ec.vocab_size = vocab.size();
  return ec;
}

std::string token_text(const pe::ModifierVocab& vocab, std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) out += (out.empty() ? "" : " ") + vocab.at(t).name;
  return out;
}

StageOutput run_pe(const ExperimentConfig& cfg, std::ostream& log) {
  const Checkpoint rl = require(Stage::Pe, cfg, log);
  const StageClock clock(cfg.record_wall_time);
  const auto prompts = gen::default_prompts(cfg.task);
  const auto generator = flow_from_checkpoint(rl);
  const auto stats = stats_from_checkpoint(rl);
  const auto vocab = pe::parse_vocab(cfg.vocab);
  const auto ec = enhancer_config(prompts, vocab);
  const pe::EnhancerPolicy init(ec, cfg.seed);
  const auto ids = prompts.ids();

  StageOutput out;
  out.metrics = metrics_path(cfg, Stage::Pe);
  MetricsWriter metrics(out.metrics);
  const auto res = pe::pe_grpo_train(init, generator, cfg.schedule, vocab, prompts, ids, stats, cfg.pe,
                                     cfg.seed, [&](const pe::PeIterationStats& s) {
                                       MetricsRow row = at("pe", s.iteration, clock.seconds());
                                       row.mean_reward = s.mean_reward;
                                       row.r_align = s.mean_alignment_z;
                                       row.r_video = s.mean_aesthetic_z;
                                       row.kl = s.kl;
                                       row.clip_frac = s.clip_fraction;
                                       row.grad_norm = s.grad_norm;
                                       row.validity = s.structure_valid;
                                       metrics.append(row);
                                     });

  // Structure validity of the trained policy on fresh samples.
  constexpr std::size_t kDraws = 100;
  double valid = 0;
  for (int p : ids) {
    for (std::size_t i = 0; i < kDraws; ++i) {
      RngStream s(cfg.seed, "pe:valid", static_cast<std::uint64_t>(p), i);
      valid += pe::sample_enhanced(res.policy, p, s).structure_valid ? 1.0 : 0.0;
    }
  }
  valid /= static_cast<double>(kDraws * ids.size());
  MetricsRow last = at("pe", cfg.pe.iterations, clock.seconds());
  last.kl = res.final_kl;
  last.validity = valid;
  metrics.append(last);

  Checkpoint ckpt = make_checkpoint("pe", cfg.pe.iterations, cfg, res.policy.params());
  ckpt.meta["kind"] = "pe";
  ckpt.meta["generator"] = fs::path(checkpoint_path(cfg, Stage::Rlhf)).filename().string();
  ckpt.meta["vocab"] = cfg.vocab;
  ckpt.meta["vagueness"] = fmt(cfg.pe.vagueness);
  ckpt.meta["enhancer.num_prompts"] = std::to_string(ec.num_prompts);
  ckpt.meta["enhancer.vocab_size"] = std::to_string(ec.vocab_size);
  ckpt.meta["enhancer.max_len"] = std::to_string(ec.max_len);
  ckpt.meta["enhancer.ctx_dim"] = std::to_string(ec.ctx_dim);
  ckpt.meta["enhancer.pos_dim"] = std::to_string(ec.pos_dim);
  ckpt.meta["enhancer.hidden"] = std::to_string(ec.hidden);
  ckpt.meta["final_kl"] = fmt(res.final_kl);
  ckpt.meta["structure_valid"] = fmt(valid);
  out.checkpoint = checkpoint_path(cfg, Stage::Pe);
  save_checkpoint(out.checkpoint, ckpt);

  std::ostringstream report;
  report << "final_kl=" << fmt(res.final_kl) << "\n";
  report << "structure_valid=" << fmt(valid) << "\n";
  for (int p : ids) {
    const auto y = pe::greedy_enhanced(res.policy, p);
    report << "greedy." << prompts.at(p).name << "=" << token_text(vocab, y.tokens) << "\n";
  }
  const std::string report_path = (fs::path(cfg.out_dir) / "pe_report.txt").string();
  write_text(report_path, report.str());
  out.artifacts = {out.checkpoint, out.metrics, report_path};
  out.summary = "pe: final KL " + short_fmt(res.final_kl) + ", structure-valid " + short_fmt(valid);
  append_timing(cfg, Stage::Pe, clock.elapsed());
  return out;
}

Checkpoint student_checkpoint(const std::string& stage, std::size_t iteration,
                              const ExperimentConfig& cfg, const ard::Student& s) {
  Checkpoint c = make_checkpoint(stage, iteration, cfg, s.params());
  c.meta["kind"] = "student";
  put_student_meta(c, s.config());
  return c;
}

StageOutput run_distill(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.task != gen::Task::Sequence) throw StageError("distill requires task = sequence");
  const Checkpoint rl = require(Stage::Distill, cfg, log);
  const StageClock clock(cfg.record_wall_time);
  const auto prompts = gen::default_prompts(cfg.task);
  const auto ids = prompts.ids();
  const auto teacher_net = flow_from_checkpoint(rl);
  const auto teacher = ard::teacher_from_flow(teacher_net);
  const auto& dc = cfg.distill;
  const fs::path dir(cfg.out_dir);

  StageOutput out;
  out.metrics = metrics_path(cfg, Stage::Distill);
  MetricsWriter metrics(out.metrics);
  const auto dmd_logger = [&](const std::string& stage) {
    return [&, stage](const ard::DmdStep& s) {
      MetricsRow row = at(stage, s.iteration, clock.seconds());
      row.grad_norm = s.gen_grad_norm;
      metrics.append(row);
    };
  };

  // Held-out teacher samples for validity and motion comparisons.
  const auto eval_pairs = ard::collect_ode_pairs(teacher, cfg.schedule, ids, dc.gsb_pairs, cfg.seed, "distill:eval");
  const auto& rows = eval_pairs.prompts;
  const auto check = [&](const std::string& stage, std::size_t iter, const ard::Student& s) {
    MetricsRow row = at(stage, iter, clock.seconds());
    row.validity = gen::validity_of(ard::student_samples(s, eval_pairs), rows, prompts);
    metrics.append(row);
    return *row.validity;
  };

  ard::StudentConfig sc = dc.student;
  sc.mode = ard::MaskMode::Bidirectional;
  const ard::Student init(sc, cfg.seed);
  const auto r1 = ard::stage1_dmd(init, teacher, teacher_net, ids, cfg.schedule, dc.stage1, cfg.seed,
                                  dmd_logger("stage1"));
  if (r1.status == ard::DistillStatus::Diverged) log << "warning: stage 1 diverged: " << r1.message << "\n";
  const double valid1 = check("stage1", dc.stage1.iterations, r1.student);

  const auto pairs = ard::collect_ode_pairs(teacher, cfg.schedule, ids, dc.pairs, cfg.seed, "stage2:pairs");
  const auto init2 = ard::causal_init(r1.student, cfg.seed);
  const auto r2 = ard::stage2_causal_regression(init2, pairs, dc.stage2, cfg.seed);
  const double valid2 = check("stage2", dc.stage2.steps, r2.student);

  const auto r3 = ard::stage3_self_forcing(r2.student, teacher, teacher_net, ids, cfg.schedule, dc.stage3,
                                           cfg.seed, dmd_logger("stage3"), &pairs);
  if (r3.status == ard::DistillStatus::Diverged) log << "warning: stage 3 diverged: " << r3.message << "\n";
  const double valid3 = check("stage3", dc.stage3.iterations, r3.student);

  const std::string p1 = (dir / "distill_stage1.ckpt").string();
  const std::string p2 = (dir / "distill_stage2.ckpt").string();
  save_checkpoint(p1, student_checkpoint("distill:stage1", dc.stage1.iterations, cfg, r1.student));
  save_checkpoint(p2, student_checkpoint("distill:stage2", dc.stage2.steps, cfg, r2.student));
  out.checkpoint = checkpoint_path(cfg, Stage::Distill);
  save_checkpoint(out.checkpoint, student_checkpoint("distill", dc.stage3.iterations, cfg, r3.student));

  const auto e2 = ard::exposure_bias(r2.student, prompts, ids, dc.exposure_rollouts, cfg.seed);
  const auto e3 = ard::exposure_bias(r3.student, prompts, ids, dc.exposure_rollouts, cfg.seed);
  const std::string labels[] = {"stage2", "stage3"};
  const ard::ExposureReport reports[] = {e2, e3};
  const std::string exposure_path = (dir / "exposure.csv").string();
  write_text(exposure_path, ard::exposure_csv(labels, reports));

  // Probe every prompt; each probe perturbs every frame index in turn.
  bool probe = true;
  for (int p : ids) probe = probe && ard::causality_probe(r3.student, p, cfg.seed).passed;

  const std::size_t d = prompts.state_dim();
  const auto motion = [&](const Tensor& x) {
    std::vector<double> m;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      m.push_back(rw::reward_motion(std::span<const double>(&x.values[i * d], d), prompts.frame_dim()));
    }
    return m;
  };
  const auto m_teacher = motion(eval_pairs.sample);
  const auto g2 = rw::gsb_compare(motion(ard::student_samples(r2.student, eval_pairs)), m_teacher, dc.delta);
  const auto g3 = rw::gsb_compare(motion(ard::student_samples(r3.student, eval_pairs)), m_teacher, dc.delta);
  const double dev_t = gen::mean_dynamics_deviation(eval_pairs.sample, rows, prompts);
  const double dev3 = gen::mean_dynamics_deviation(ard::student_samples(r3.student, eval_pairs), rows, prompts);

  std::ostringstream rep;
  rep << "stage1_status=" << (r1.status == ard::DistillStatus::Completed ? "completed" : "diverged") << "\n";
  rep << "stage3_status=" << (r3.status == ard::DistillStatus::Completed ? "completed" : "diverged") << "\n";
  rep << "validity_stage1=" << fmt(valid1) << "\n";
  rep << "validity_stage2=" << fmt(valid2) << "\n";
  rep << "validity_stage3=" << fmt(valid3) << "\n";
  rep << "stage2_loss_initial=" << fmt(r2.initial_loss) << "\n";
  rep << "stage2_loss_final=" << fmt(r2.final_loss) << "\n";
  rep << "dynamics_deviation_teacher=" << fmt(dev_t) << "\n";
  rep << "dynamics_deviation_student=" << fmt(dev3) << "\n";
  rep << "causality_probe=" << (probe ? "pass" : "fail") << "\n";
  rep << "exposure_slope_stage2=" << fmt(e2.slope) << "\n";
  rep << "exposure_slope_stage3=" << fmt(e3.slope) << "\n";
  rep << "motion_gsb_stage2=" << fmt(g2.good) << "," << fmt(g2.same) << "," << fmt(g2.bad) << "\n";
  rep << "motion_gsb_stage3=" << fmt(g3.good) << "," << fmt(g3.same) << "," << fmt(g3.bad) << "\n";
  rep << "motion_gsb_pairs=" << g3.pairs << "\n";
  const std::string report_path = (dir / "distill_report.txt").string();
  write_text(report_path, rep.str());

  out.artifacts = {p1, p2, out.checkpoint, out.metrics, exposure_path, report_path};
  out.summary = "distill: probe " + std::string(probe ? "pass" : "fail") + ", exposure slope " +
                short_fmt(e2.slope) + " -> " + short_fmt(e3.slope) + ", motion same " + short_fmt(g3.same);
  append_timing(cfg, Stage::Distill, clock.elapsed());
  return out;
}

// ---- evaluation -----------------------------------------------------------

struct Side {
  std::optional<gen::FlowNet> net;
  std::optional<pe::EnhancerPolicy> policy;
  std::optional<double> vagueness;  // set for enhancers
};

Side load_side(const std::string& path, const ExperimentConfig& cfg, std::ostream& log) {
  if (!fs::exists(path)) throw std::runtime_error("cannot open checkpoint " + path);
  const Checkpoint c = load_checked(path, cfg, log);
  Side s;
  const std::string kind = c.get("kind");
  if (kind == "flow") {
    s.net = flow_from_checkpoint(c);
  } else if (kind == "pe") {
    const auto gpath = fs::path(path).parent_path() / c.get("generator");
    if (!fs::exists(gpath)) throw std::runtime_error("enhancer generator missing: " + gpath.string());
    s.net = flow_from_checkpoint(load_checked(gpath.string(), cfg, log));
    pe::EnhancerConfig ec;
    ec.num_prompts = meta_size(c, "enhancer.num_prompts");
    ec.vocab_size = meta_size(c, "enhancer.vocab_size");
    ec.max_len = meta_size(c, "enhancer.max_len");
    ec.ctx_dim = meta_size(c, "enhancer.ctx_dim");
    ec.pos_dim = meta_size(c, "enhancer.pos_dim");
    ec.hidden = meta_size(c, "enhancer.hidden");
    s.policy.emplace(ec, c.params);
    s.vagueness = meta_real(c, "vagueness");
  } else {
    throw std::invalid_argument("cannot evaluate a '" + kind + "' checkpoint: " + path);
  }
  return s;
}

}  // namespace

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::Pretrain: return "pretrain";
    case Stage::Sft: return "sft";
    case Stage::Rlhf: return "rlhf";
    case Stage::Pe: return "pe";
    case Stage::Distill: return "distill";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::Pretrain, Stage::Sft, Stage::Rlhf, Stage::Pe, Stage::Distill}) {
    if (stage_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown stage: " + name);
}

std::optional<Stage> prerequisite(Stage stage) {
  switch (stage) {
    case Stage::Pretrain: return std::nullopt;
    case Stage::Sft: return Stage::Pretrain;
    case Stage::Rlhf: return Stage::Sft;
    case Stage::Pe: return Stage::Rlhf;
    case Stage::Distill: return Stage::Rlhf;
  }
  return std::nullopt;
}

std::string checkpoint_path(const ExperimentConfig& config, Stage stage) {
  return (fs::path(config.out_dir) / (stage_name(stage) + ".ckpt")).string();
}

std::string metrics_path(const ExperimentConfig& config, Stage stage) {
  return (fs::path(config.out_dir) / ("metrics_" + stage_name(stage) + ".csv")).string();
}

std::string dataset_path(const ExperimentConfig& config) {
  return (fs::path(config.out_dir) / "dataset.ckpt").string();
}

std::vector<std::string> hashed_sections(const std::string& stage) {
  std::vector<std::string> s = {"global", "data", "net", "pretrain"};
  const auto add = [&](std::initializer_list<const char*> more) { s.insert(s.end(), more.begin(), more.end()); };
  if (stage == "dataset" || stage == "pretrain") return s;
  add({"schedule", "sft"});
  if (stage == "sft") return s;
  add({"rewards", "rlhf"});
  if (stage == "rlhf") return s;
  if (stage == "pe") {
    add({"pe"});
  } else {
    add({"distill"});
  }
  return s;
}

std::string stage_hash(const ExperimentConfig& config, const std::string& stage) {
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(config, hashed_sections(stage))));
  return hash;
}

Checkpoint make_checkpoint(const std::string& stage, std::size_t iteration,
                           const ExperimentConfig& config, ParamStore params) {
  Checkpoint c;
  c.params = std::move(params);
  c.meta["stage"] = stage;
  c.meta["iteration"] = std::to_string(iteration);
  c.meta["config_hash"] = stage_hash(config, stage);
  c.meta["format_version"] = std::to_string(kCheckpointVersion);
  c.meta["seed"] = std::to_string(config.seed);
  return c;
}

Checkpoint load_checked(const std::string& path, const ExperimentConfig& config, std::ostream& log) {
  Checkpoint c = load_checkpoint(path);
  const auto stage = c.meta.find("stage");
  const std::string expected = stage_hash(config, stage == c.meta.end() ? "" : stage->second);
  const auto it = c.meta.find("config_hash");
  if (it == c.meta.end() || it->second != expected) {
    log << "warning: " << path << " was written under a different config (hash "
        << (it == c.meta.end() ? "none" : it->second) << ", current " << expected << ")\n";
  }
  return c;
}

void put_net_meta(Checkpoint& c, const gen::FlowNetConfig& n) {
  c.meta["net.state_dim"] = std::to_string(n.state_dim);
  c.meta["net.num_prompts"] = std::to_string(n.num_prompts);
  c.meta["net.hidden"] = std::to_string(n.hidden);
  c.meta["net.depth"] = std::to_string(n.depth);
  c.meta["net.time_features"] = std::to_string(n.time_features);
  c.meta["net.prompt_dim"] = std::to_string(n.prompt_dim);
  c.meta["net.prefix"] = n.prefix;
}

gen::FlowNet flow_from_checkpoint(const Checkpoint& c) {
  gen::FlowNetConfig n;
  n.state_dim = meta_size(c, "net.state_dim");
  n.num_prompts = meta_size(c, "net.num_prompts");
  n.hidden = meta_size(c, "net.hidden");
  n.depth = meta_size(c, "net.depth");
  n.time_features = meta_size(c, "net.time_features");
  n.prompt_dim = meta_size(c, "net.prompt_dim");
  n.prefix = c.get("net.prefix");
  try {
    return gen::FlowNet(n, c.params);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::Malformed, e.what());
  }
}

void put_stats_meta(Checkpoint& c, const rw::NormStats& stats) {
  c.meta["stats.mean"] = join(stats.mean);
  c.meta["stats.std"] = join(stats.std);
}

rw::NormStats stats_from_checkpoint(const Checkpoint& c) {
  rw::NormStats s;
  s.mean = split_components(c.get("stats.mean"));
  s.std = split_components(c.get("stats.std"));
  return s;
}

StageOutput run_stage(Stage stage, const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  fs::create_directories(config.out_dir);
  switch (stage) {
    case Stage::Pretrain: return run_pretrain(config, log);
    case Stage::Sft: return run_sft(config, log);
    case Stage::Rlhf: return run_rlhf(config, log);
    case Stage::Pe: return run_pe(config, log);
    case Stage::Distill: return run_distill(config, log);
  }
  throw std::logic_error("unhandled stage");
}

const AspectResult& EvalReport::aspect(const std::string& name) const {
  for (const auto& a : aspects) {
    if (a.aspect == name) return a;
  }
  throw std::out_of_range("no aspect " + name);
}

EvalReport evaluate(const std::string& ckpt_a, const std::string& ckpt_b,
                    const ExperimentConfig& config, std::span<const int> prompt_ids, double delta,
                    std::ostream& log) {
  if (prompt_ids.empty()) throw std::invalid_argument("evaluate: empty prompt set");
  const auto prompts = gen::default_prompts(config.task);
  for (int p : prompt_ids) prompts.at(p);
  const Side a = load_side(ckpt_a, config, log);
  const Side b = load_side(ckpt_b, config, log);
  for (const Side* s : {&a, &b}) {
    if (s->net->config().state_dim != prompts.state_dim()) {
      throw std::invalid_argument("evaluate: checkpoint state dimension does not match the task");
    }
  }
  const double vagueness = a.vagueness ? *a.vagueness : b.vagueness ? *b.vagueness : config.eval.vagueness;
  const auto vocab = pe::parse_vocab(config.vocab);
  const std::size_t n = config.eval.samples;

  const auto draw = [&](const Side& s, int p) {
    std::vector<int> tokens = {pe::kEnd};
    if (s.policy) tokens = pe::greedy_enhanced(*s.policy, p).tokens;
    RngStream stream(config.seed, "eval", static_cast<std::uint64_t>(p));
    const auto cond = pe::apply_effects(*s.net, vocab, p, tokens, vagueness);
    return pe::sample_conditioned(*s.net, config.schedule, cond, n, stream);
  };

  std::vector<rw::Components> ca, cb;
  for (int p : prompt_ids) {
    const std::vector<int> rows(n, p);
    for (const auto& c : rw::raw_batch(prompts, draw(a, p), rows)) ca.push_back(c);
    for (const auto& c : rw::raw_batch(prompts, draw(b, p), rows)) cb.push_back(c);
  }
  rw::RewardWeights weights;
  weights.w = config.weights.w;
  weights.stats = rw::fit_norm_stats(cb);

  EvalReport report;
  report.label_a = ckpt_a;
  report.label_b = ckpt_b;
  report.delta = delta;
  report.vagueness = vagueness;
  const auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  for (std::size_t k = 0; k <= rw::kComponents; ++k) {
    std::vector<double> ra, rb;
    for (std::size_t i = 0; i < ca.size(); ++i) {
      if (k == rw::kComponents) {
        ra.push_back(rw::aggregate(ca[i], weights));
        rb.push_back(rw::aggregate(cb[i], weights));
      } else {
        ra.push_back(rw::normalize(ca[i], *weights.stats)[k]);
        rb.push_back(rw::normalize(cb[i], *weights.stats)[k]);
      }
    }
    const std::string name = k == rw::kComponents ? "aggregate" : rw::kComponentNames[k];
    report.aspects.push_back({name, rw::gsb_compare(ra, rb, delta), mean(ra), mean(rb)});
  }
  return report;
}

std::string eval_csv(const EvalReport& r) {
  std::string out = "aspect,good,same,bad,net,pairs,mean_a,mean_b\n";
  for (const auto& a : r.aspects) {
    out += a.aspect + "," + fmt(a.gsb.good) + "," + fmt(a.gsb.same) + "," + fmt(a.gsb.bad) + "," +
           fmt(a.gsb.net()) + "," + std::to_string(a.gsb.pairs) + "," + fmt(a.mean_a) + "," +
           fmt(a.mean_b) + "\n";
  }
  return out;
}

std::string eval_summary(const EvalReport& r) {
  std::ostringstream s;
  s << "GSB: A = " << r.label_a << ", B = " << r.label_b << "\n";
  s << "delta " << short_fmt(r.delta) << ", user vagueness " << short_fmt(r.vagueness)
    << ", components z-scored against B\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %7s %7s %7s %8s %7s\n", "aspect", "good", "same", "bad",
                "good-bad", "pairs");
  s << line;
  for (const auto& a : r.aspects) {
    std::snprintf(line, sizeof line, "%-16s %7.3f %7.3f %7.3f %+8.3f %7zu\n", a.aspect.c_str(),
                  a.gsb.good, a.gsb.same, a.gsb.bad, a.gsb.net(), a.gsb.pairs);
    s << line;
  }
  return s.str();
}

}  // namespace fgpl::pipe
