#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fgpl/ardistill.hpp"
#include "fgpl/flowsde/sampler.hpp"
#include "gradcheck.hpp"

using namespace fgpl;
using namespace fgpl::ard;

namespace {

StudentConfig small_config(MaskMode mode) {
  StudentConfig c;
  c.frames = 3;
  c.num_prompts = 2;
  c.prompt_dim = 3;
  c.pos_dim = 3;
  c.time_features = 4;
  c.hidden = 8;
  c.depth = 1;
  c.steps = 2;
  c.mode = mode;
  return c;
}

gen::FlowNet small_flow(std::uint64_t seed, std::size_t dim = 6, std::size_t prompts = 2) {
  gen::FlowNetConfig c;
  c.state_dim = dim;
  c.num_prompts = prompts;
  c.hidden = 8;
  c.depth = 1;
  c.prompt_dim = 3;
  c.time_features = 4;
  return gen::FlowNet(c, seed);
}

Tensor noise(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  RngStream r(seed, "test-noise");
  return Tensor::matrix(rows, cols, r.gaussian(rows * cols));
}

// Exact Gaussian law of prompt 0's sequences, as an analytic teacher.
flow::GaussianOracle sequence_oracle(const gen::PromptSet& ps) {
  const auto& c = ps.at(0).law.components().at(0);
  return flow::GaussianOracle(c.mean, c.cov);
}

bool all_zero(const ParamStore& store) {
  for (const auto& [_, t] : store)
    for (double g : *t.grad)
      if (g != 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("frame cache: append-only with capacity F") {
  FrameCache cache(2, 2);
  CHECK(cache.context() == std::vector<double>{0, 0, 0, 0});
  cache.append({1, 2});
  CHECK(cache.context() == std::vector<double>{1, 2, 0, 0});
  cache.append({3, 4});
  CHECK_THROWS_AS(cache.append({5, 6}), std::length_error);
  CHECK_THROWS_AS(FrameCache(2, 2).append({1}), std::invalid_argument);
}

TEST_CASE("rollout: deterministic, equals batched and teacher-forced generation") {
  const Student s(small_config(MaskMode::BlockCausal), 3);
  RngStream a(5, "roll"), b(5, "roll"), c(5, "roll");
  const auto r1 = self_forcing_rollout(s, 1, a);
  const auto r2 = self_forcing_rollout(s, 1, b);
  CHECK(r1 == r2);

  // The rollout draws frame noise in order, so one draw of F·d is the same noise.
  const Tensor eps = Tensor::matrix(1, 6, c.gaussian(6));
  const int p[] = {1};
  CHECK(s.generate(eps, p).values == r1);

  Tape tape(false);
  const Tensor forced =
      s.teacher_forced(tape, tape.constant(eps), p, Tensor::matrix(1, 6, r1)).value();
  CHECK(forced.values == r1);

  CHECK_THROWS_AS(self_forcing_rollout(s.with_mode(MaskMode::Bidirectional), 0, a),
                  std::logic_error);
}

TEST_CASE("causality probe: block-causal passes, bidirectional fails") {
  const Student causal(small_config(MaskMode::BlockCausal), 4);
  const auto ok = causality_probe(causal, 0, 9);
  CHECK(ok.passed);
  CHECK(ok.prefix_unchanged.size() == 3);
  CHECK(ok.frame_changed[0]);
  CHECK(ok.prefix_unchanged[2]);

  const auto bad = causality_probe(causal.with_mode(MaskMode::Bidirectional), 0, 9);
  CHECK_FALSE(bad.passed);
  CHECK_FALSE(bad.prefix_unchanged[2]);
}

TEST_CASE("score from velocity agrees with the Gaussian oracle score") {
  Eigen::Vector2d mu(0.5, -1.0);
  Eigen::Matrix2d cov;
  cov << 0.7, 0.1, 0.1, 0.4;
  const flow::GaussianOracle o(mu, cov);
  const Teacher t = teacher_from_oracle(o);
  const Tensor x = noise(5, 2, 1);
  const std::vector<double> ts = {0.9, 0.5, 0.3, 0.12, 0.04};
  const Tensor s = score_from_velocity(x, ts, t.velocity(x, ts, std::vector<int>(5, 0)));
  for (std::size_t b = 0; b < 5; ++b) {
    const Eigen::VectorXd ref = o.score(Eigen::Vector2d(x.values[2 * b], x.values[2 * b + 1]), ts[b]);
    CHECK(s.values[2 * b] == doctest::Approx(ref[0]).epsilon(1e-10));
    CHECK(s.values[2 * b + 1] == doctest::Approx(ref[1]).epsilon(1e-10));
  }
}

TEST_CASE("dmd: identical scores give exactly zero generator gradient") {
  const flow::NoiseSchedule sched;
  const gen::FlowNet net = small_flow(2);
  const Teacher same = teacher_from_flow(net);
  const int pool[] = {0, 1};
  for (MaskMode mode : {MaskMode::Bidirectional, MaskMode::BlockCausal}) {
    Student s(small_config(mode), 7);
    RngStream rng(3, "dmd");
    const DmdNoise n = draw_dmd_noise(16, 6, pool, sched, rng);
    for (bool norm : {false, true}) {
      dmd_grad(s, same, same, n, norm);
      CHECK(all_zero(s.params()));
    }
  }
}

TEST_CASE("dmd: pseudo-objective gradient matches finite differences") {
  const flow::NoiseSchedule sched;
  const gen::FlowNet data = small_flow(2), fake = small_flow(5);
  const Teacher td = teacher_from_flow(data), tf = teacher_from_flow(fake);
  const int pool[] = {0, 1};
  for (MaskMode mode : {MaskMode::Bidirectional, MaskMode::BlockCausal}) {
    Student s(small_config(mode), 7);
    RngStream rng(3, "dmd");
    const DmdNoise n = draw_dmd_noise(8, 6, pool, sched, rng);
    const Tensor signal = dmd_signal(s, td, tf, n);
    double sig = 0.0;
    for (double v : signal.values) sig += std::abs(v);
    REQUIRE(sig > 0.0);

    dmd_grad(s, td, tf, n);
    const auto gc = testing::compare_with_fd(s.params(), [&](const ParamStore& st) {
      const Student probe(s.config(), st);
      Tape t(false);
      return dmd_pseudo_objective(t, probe, n, signal).item();
    });
    CHECK(gc.analytic_norm > 0.0);
    CHECK(gc.max_rel_err < 1e-3);
  }
}

TEST_CASE("dmd: duplicating the batch leaves the gradient unchanged") {
  const flow::NoiseSchedule sched;
  const gen::FlowNet data = small_flow(2), fake = small_flow(5);
  const Teacher td = teacher_from_flow(data), tf = teacher_from_flow(fake);
  const int pool[] = {0, 1};
  Student s(small_config(MaskMode::Bidirectional), 7);
  RngStream rng(3, "dmd");
  const DmdNoise n = draw_dmd_noise(8, 6, pool, sched, rng);
  DmdNoise twice = n;
  twice.eps = Tensor::matrix(16, 6, [&] {
    auto v = n.eps.values;
    v.insert(v.end(), n.eps.values.begin(), n.eps.values.end());
    return v;
  }());
  twice.z = Tensor::matrix(16, 6, [&] {
    auto v = n.z.values;
    v.insert(v.end(), n.z.values.begin(), n.z.values.end());
    return v;
  }());
  twice.t.insert(twice.t.end(), n.t.begin(), n.t.end());
  twice.prompts.insert(twice.prompts.end(), n.prompts.begin(), n.prompts.end());

  dmd_grad(s, td, tf, n);
  std::vector<std::vector<double>> g1;
  for (const auto& [_, t] : s.params()) g1.push_back(*t.grad);
  dmd_grad(s, td, tf, twice);
  std::size_t k = 0;
  for (const auto& [_, t] : s.params()) {
    for (std::size_t i = 0; i < g1[k].size(); ++i) {
      CHECK((*t.grad)[i] == doctest::Approx(g1[k][i]).epsilon(1e-12));
    }
    ++k;
  }
}

TEST_CASE("dmd: teacher and fake must agree") {
  const flow::NoiseSchedule sched;
  const gen::FlowNet a = small_flow(1), wide = small_flow(2, 8), more = small_flow(3, 6, 3);
  Student s(small_config(MaskMode::Bidirectional), 7);
  const int pool[] = {0};
  RngStream rng(3, "dmd");
  const DmdNoise n = draw_dmd_noise(4, 6, pool, sched, rng);
  CHECK_THROWS_AS(dmd_signal(s, teacher_from_flow(a), teacher_from_flow(wide), n),
                  std::invalid_argument);
  CHECK_THROWS_AS(dmd_signal(s, teacher_from_flow(a), teacher_from_flow(more), n),
                  std::invalid_argument);
}

TEST_CASE("ode pairs: count, determinism and direct sampling") {
  const flow::NoiseSchedule sched;
  const gen::FlowNet net = small_flow(2);
  const Teacher t = teacher_from_flow(net);
  const int pool[] = {0, 1};
  const OdePairs p = collect_ode_pairs(t, sched, pool, 7, 4, "pairs");
  CHECK(p.size() == 7);
  CHECK(p.sample.shape == Shape{7, 6});
  const OdePairs q = collect_ode_pairs(t, sched, pool, 7, 4, "pairs");
  CHECK(p.sample.values == q.sample.values);
  for (std::size_t j : {0u, 3u, 6u}) {
    RngStream r(4, "pairs", j);
    const Tensor x = Tensor::matrix(1, 6, r.gaussian(6));
    const Tensor direct = flow::sample_ode(net.velocity_fn({p.prompts[j]}), sched, x);
    CHECK(p.prompts[j] == pool[j % 2]);
    CHECK(std::equal(direct.values.begin(), direct.values.end(), p.sample.values.begin() + 6 * j));
  }
}

TEST_CASE("stage 1: Gaussian control moments and identities") {
  const flow::NoiseSchedule sched;
  Eigen::Vector2d mu(1.0, -0.5);
  Eigen::Matrix2d cov;
  cov << 0.5, 0.2, 0.2, 0.3;
  const Teacher teacher = teacher_from_oracle(flow::GaussianOracle(mu, cov));
  StudentConfig sc;
  sc.frames = 1;
  sc.num_prompts = 1;
  sc.steps = 1;
  const Student init(sc, 3);
  gen::FlowNetConfig fc;
  fc.state_dim = 2;
  fc.num_prompts = 1;
  const gen::FlowNet fake(fc, 3);
  const int pool[] = {0};

  DmdConfig none;
  none.iterations = 0;
  CHECK(stage1_dmd(init, teacher, fake, pool, sched, none, 3).student.params().same_values(
      init.params()));
  CHECK_THROWS_AS(stage1_dmd(init.with_mode(MaskMode::BlockCausal), teacher, fake, pool, sched,
                             none, 3),
                  std::logic_error);

  DmdConfig dc;
  dc.iterations = 600;
  dc.batch = 256;
  dc.lr_fake = 3e-3;
  dc.fake_warmup = 300;
  const DmdResult r = stage1_dmd(init, teacher, fake, pool, sched, dc, 3);
  REQUIRE(r.status == DistillStatus::Completed);
  CHECK(r.history.size() == 600);
  for (const auto& h : r.history) CHECK(h.fake_updates == 5);

  RngStream e(11, "eval");
  const Tensor eps = Tensor::matrix(10000, 2, e.gaussian(20000));
  const auto ms = flow::empirical_moments(r.student.generate(eps, std::vector<int>(10000, 0)));
  const auto mt =
      flow::empirical_moments(flow::sample_ode(teacher.velocity_fn(std::vector<int>(10000, 0)), sched, eps));
  MESSAGE("mean diff " << flow::max_abs_diff(ms.mean, mt.mean) << " cov diff "
                       << flow::max_abs_diff(ms.cov, mt.cov));
  CHECK(flow::max_abs_diff(ms.mean, mt.mean) < 0.1);
  CHECK(flow::max_abs_diff(ms.cov, mt.cov) < 0.15);
}

TEST_CASE("stage 2: degenerate sequence, loss reduction, causality") {
  const flow::NoiseSchedule sched;
  const auto ps = gen::default_sequence_prompts(4);
  const Teacher teacher = teacher_from_oracle(sequence_oracle(ps));
  StudentConfig sc;
  sc.frames = 4;
  sc.num_prompts = 1;
  sc.hidden = 32;
  const Student bidir(sc, 2);
  std::size_t copied = 0;
  const Student causal = causal_init(bidir, 8, &copied);
  CHECK(copied == bidir.params().size());
  CHECK(causal.config().mode == MaskMode::BlockCausal);

  const int pool[] = {0};
  const OdePairs pairs = collect_ode_pairs(teacher, sched, pool, 1000, 6, "pairs");
  CHECK_THROWS_AS(stage2_causal_regression(bidir, pairs, {}, 1), std::logic_error);
  RegressionConfig rc;
  rc.steps = 800;
  const RegressionResult r = stage2_causal_regression(causal, pairs, rc, 1);
  MESSAGE("stage 2 loss " << r.initial_loss << " -> " << r.final_loss);
  CHECK(r.final_loss <= 0.5 * r.initial_loss);
  CHECK(causality_probe(r.student, 0, 3).passed);

  // F = 1: no history, so the loss is plain regression of the generated frame.
  StudentConfig one = sc;
  one.frames = 1;
  one.mode = MaskMode::BlockCausal;
  const Student single(one, 5);
  OdePairs p1;
  p1.dim = 2;
  p1.noise = noise(6, 2, 1);
  p1.sample = noise(6, 2, 2);
  p1.prompts.assign(6, 0);
  const std::vector<std::size_t> rows = {0, 1, 2, 3, 4, 5};
  Tape t(false);
  const double loss = regression_loss(t, single, p1, rows).item();
  const Tensor out = single.generate(p1.noise, p1.prompts);
  double mse = 0.0;
  for (std::size_t i = 0; i < 12; ++i) mse += std::pow(out.values[i] - p1.sample.values[i], 2) / 12.0;
  CHECK(loss == doctest::Approx(mse).epsilon(1e-12));
}

TEST_CASE("stage 3: identity at zero iterations, bookkeeping, exposure report") {
  const flow::NoiseSchedule sched;
  const auto ps = gen::default_sequence_prompts(4);
  const Teacher teacher = teacher_from_oracle(sequence_oracle(ps));
  StudentConfig sc;
  sc.frames = 4;
  sc.num_prompts = 1;
  sc.hidden = 16;
  sc.mode = MaskMode::BlockCausal;
  const Student s2(sc, 2);
  gen::FlowNetConfig fc;
  fc.state_dim = 8;
  fc.num_prompts = 1;
  fc.hidden = 16;
  const gen::FlowNet fake(fc, 2);
  const int pool[] = {0};

  DmdConfig none;
  none.iterations = 0;
  CHECK(stage3_self_forcing(s2, teacher, fake, pool, sched, none, 1).student.params().same_values(
      s2.params()));
  CHECK_THROWS_AS(stage3_self_forcing(s2.with_mode(MaskMode::Bidirectional), teacher, fake, pool,
                                      sched, none, 1),
                  std::logic_error);

  DmdConfig dc;
  dc.iterations = 5;
  dc.batch = 8;
  const DmdResult r = stage3_self_forcing(s2, teacher, fake, pool, sched, dc, 1);
  CHECK(r.status == DistillStatus::Completed);
  CHECK(r.history.size() == 5);
  CHECK_FALSE(r.student.params().same_values(s2.params()));
  CHECK(causality_probe(r.student, 0, 1).passed);

  const int ids[] = {0};
  const ExposureReport a = exposure_bias(r.student, ps, ids, 20, 4);
  const ExposureReport b = exposure_bias(r.student, ps, ids, 20, 4);
  CHECK(a.frame_error == b.frame_error);
  CHECK(a.frame_error.size() == 4);
  CHECK(a.frame_error[0] < 1e-12);
  const std::string labels[] = {"x"};
  const ExposureReport reps[] = {a};
  const std::string csv = exposure_csv(labels, reps);
  CHECK(csv.rfind("frame,x\n0,", 0) == 0);
  CHECK(csv.find("slope,") != std::string::npos);
}

TEST_CASE("dmd: regression anchor pulls the student toward teacher pairs") {
  const flow::NoiseSchedule sched;
  const auto ps = gen::default_sequence_prompts(4);
  const Teacher teacher = teacher_from_oracle(sequence_oracle(ps));
  StudentConfig sc;
  sc.frames = 4;
  sc.num_prompts = 1;
  sc.hidden = 16;
  sc.mode = MaskMode::BlockCausal;
  const Student s0(sc, 3);
  gen::FlowNetConfig fc;
  fc.state_dim = 8;
  fc.num_prompts = 1;
  fc.hidden = 16;
  const gen::FlowNet fake(fc, 3);
  const int pool[] = {0};
  const OdePairs pairs = collect_ode_pairs(teacher, sched, pool, 64, 3, "anchor");

  DmdConfig dc;
  dc.iterations = 30;
  dc.batch = 16;
  dc.lr_gen = 3e-3;
  dc.regression_weight = 1.0;
  CHECK_THROWS_AS(stage3_self_forcing(s0, teacher, fake, pool, sched, dc, 1), std::invalid_argument);
  dc.regression_weight = -1.0;
  CHECK_THROWS_AS(dc.validate(), std::invalid_argument);

  std::vector<std::size_t> rows(pairs.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto loss_of = [&](const Student& s) {
    Tape tape;
    return regression_loss(tape, s, pairs, rows).item();
  };
  dc.regression_weight = 1e3;
  const DmdResult anchored = stage3_self_forcing(s0, teacher, fake, pool, sched, dc, 1, {}, &pairs);
  dc.regression_weight = 0.0;
  const DmdResult free = stage3_self_forcing(s0, teacher, fake, pool, sched, dc, 1, {}, &pairs);
  MESSAGE("pair loss: init " << loss_of(s0) << " anchored " << loss_of(anchored.student) << " free "
                             << loss_of(free.student));
  CHECK(loss_of(anchored.student) < 0.8 * loss_of(s0));
  CHECK(loss_of(anchored.student) < loss_of(free.student));
}

TEST_CASE("fit_slope: exact on a line") {
  const std::vector<double> y = {1.0, 1.5, 2.0, 2.5};
  CHECK(fit_slope(y) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(fit_slope(std::vector<double>{1.0}), std::invalid_argument);
}
