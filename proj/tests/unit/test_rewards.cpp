#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fgpl/diffcore/ops.hpp"
#include "fgpl/rewards.hpp"
#include "gradcheck.hpp"

using namespace fgpl;
using namespace fgpl::rw;

namespace {

gen::PromptSet unit_gaussian_prompt() {
  gen::MixtureLaw::Component c{Eigen::Vector2d(1.0, -1.0), Eigen::Matrix2d::Identity(), 1.0};
  return gen::PromptSet(gen::Task::Point, {{0, "unit", true, gen::MixtureLaw({c}), {}}});
}

gen::PromptSet twin_prompt() {
  gen::MixtureLaw::Component a{Eigen::Vector2d(-1.0, 0.0), 0.2 * Eigen::Matrix2d::Identity(), 0.5};
  gen::MixtureLaw::Component b{Eigen::Vector2d(1.0, 0.0), 0.2 * Eigen::Matrix2d::Identity(), 0.5};
  return gen::PromptSet(gen::Task::Point, {{0, "twin", true, gen::MixtureLaw({a, b}), {}}});
}

NormStats reference_stats(const gen::PromptSet& ps, std::uint64_t seed) {
  std::vector<Components> batch;
  for (std::size_t i = 0; i < 1000; ++i) {
    RngStream rng(seed, "ref", i);
    const int id = ps.ids()[i % ps.size()];
    const auto& spec = ps.at(id);
    auto x = spec.dynamics ? spec.dynamics->sample(rng) : spec.law.sample(rng);
    for (double& v : x) v += 0.5 * rng.normal();
    batch.push_back(raw_components(ps, id, x));
  }
  return fit_norm_stats(batch);
}

}  // namespace

TEST_CASE("alignment: distance to the nearest mode") {
  const auto ps = gen::default_point_prompts();
  const std::vector<double> mode = {2.5, 2.0}, one = {3.5, 2.0}, half = {3.0, 2.0};
  CHECK(reward_alignment(ps, 0, mode) == 0.0);
  CHECK(reward_alignment(ps, 0, one) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(reward_alignment(ps, 0, half) >= reward_alignment(ps, 0, one));
  // nearest of two modes
  const std::vector<double> lower = {-2.5, -0.2};
  CHECK(reward_alignment(ps, 1, lower) == doctest::Approx(-0.09).epsilon(1e-12));
  CHECK_THROWS_AS(reward_alignment(ps, 9, mode), std::out_of_range);
}

TEST_CASE("alignment: sequence deviation") {
  const auto ps = gen::default_sequence_prompts();
  const auto& dyn = *ps.at(0).dynamics;
  auto seq = dyn.nominal();
  CHECK(reward_alignment(ps, 0, seq) == doctest::Approx(0.0).epsilon(1e-12));
  // shifting the whole trajectory keeps it anchored
  for (double& v : seq) v += 0.7;
  CHECK(std::abs(reward_alignment(ps, 0, seq)) < 1e-12);
  seq[2 * 7] += 0.8;  // last frame off by 0.8
  CHECK(reward_alignment(ps, 0, seq) == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("aesthetic: Gaussian peak density and tails") {
  const auto ps = unit_gaussian_prompt();
  const std::vector<double> mode = {1.0, -1.0};
  CHECK(reward_video_aesthetic(ps, 0, mode) == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-12));
  CHECK(std::abs(reward_video_aesthetic(ps, 0, mode) + 1.8379) < 1e-4);
  double prev = 0.0;
  for (double r : {1.0, 3.0, 10.0, 30.0}) {
    const std::vector<double> x = {1.0 + r, -1.0};
    const double v = reward_video_aesthetic(ps, 0, x);
    if (r > 1.0) CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < -400.0);
  CHECK(reward_image_aesthetic(ps, 0, mode) == reward_video_aesthetic(ps, 0, mode));

  const auto twin = twin_prompt();
  const std::vector<double> p = {0.3, 0.4}, q = {-0.3, 0.4};
  CHECK(reward_video_aesthetic(twin, 0, p) == doctest::Approx(reward_video_aesthetic(twin, 0, q)).epsilon(1e-14));
}

TEST_CASE("image aesthetic: mean of frame log-densities") {
  const auto ps = gen::default_sequence_prompts();
  const auto& dyn = *ps.at(1).dynamics;
  const auto seq = dyn.nominal();
  double s = 0.0;
  for (std::size_t i = 0; i < dyn.frames; ++i) {
    // each frame is N(nominal_i, (offset² + noise²) I)
    const double var = dyn.offset_std * dyn.offset_std + dyn.frame_noise_std * dyn.frame_noise_std;
    s += -std::log(2 * std::numbers::pi * var);
  }
  CHECK(reward_image_aesthetic(ps, 1, seq) == doctest::Approx(s / dyn.frames).epsilon(1e-10));
}

TEST_CASE("motion: second differences") {
  std::vector<double> linear, jitter, still;
  for (int i = 0; i < 6; ++i) {
    linear.insert(linear.end(), {0.5 * i, -0.25 * i});
    jitter.insert(jitter.end(), {static_cast<double>(i % 2), 0.0});
    still.insert(still.end(), {3.0, 3.0});
  }
  CHECK(reward_motion(linear) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(reward_motion(jitter) == doctest::Approx(-4.0).epsilon(1e-14));
  CHECK(reward_motion(still) == 0.0);
  const std::vector<double> two = {0, 0, 1, 1};
  CHECK_THROWS_AS(reward_motion(two), std::invalid_argument);
}

TEST_CASE("aggregate: z-normalized weighting") {
  NormStats st;
  st.mean = {1.0, 2.0, 3.0, 4.0};
  st.std = {0.5, 1.0, 2.0, 0.0};
  RewardWeights w;
  w.stats = st;
  CHECK(aggregate(st.mean, w) == 0.0);

  const Components c = {2.0, 1.0, 5.0, 9.0};
  w.w = {0.0, 0.0, 1.0, 0.0};
  CHECK(aggregate(c, w) == doctest::Approx(1.0));
  w.w = {0.3, 0.3, 0.2, 0.2};
  const double base = aggregate(c, w);
  CHECK(base == doctest::Approx(0.3 * 2.0 - 0.3 * 1.0 + 0.2 * 1.0));
  w.w = {0.6, 0.6, 0.4, 0.4};
  CHECK(aggregate(c, w) == doctest::Approx(2 * base));

  w.w = {0, 0, 0, 0};
  CHECK_THROWS_AS(aggregate(c, w), std::invalid_argument);
  w.w = {1, -1, 0, 0};
  CHECK_THROWS_AS(aggregate(c, w), std::invalid_argument);
  RewardWeights unfrozen;
  CHECK_THROWS_AS(aggregate(c, unfrozen), std::logic_error);

  CHECK(parse_weights("0.3,0.3,0.2,0.2") == Components{0.3, 0.3, 0.2, 0.2});
  CHECK_THROWS_AS(parse_weights("1,2,3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_weights("1,2,x,4"), std::invalid_argument);
}

TEST_CASE("norm stats: population moments") {
  std::vector<Components> b = {{1, 0, 0, 0}, {3, 0, 0, 0}};
  const auto s = fit_norm_stats(b);
  CHECK(s.mean[0] == 2.0);
  CHECK(s.std[0] == 1.0);
  CHECK(s.std[1] == 0.0);
  CHECK_THROWS_AS(fit_norm_stats({}), std::invalid_argument);
}

TEST_CASE("rank loss: hand values and gradient") {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(1, 2, {0.4, 0.0}));
  Var b = tape.constant(Tensor::matrix(1, 2, {0.4, 0.0}));
  CHECK(rank_loss(a, b).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  Var big = tape.constant(Tensor::matrix(1, 2, {60.0, 0.0}));
  CHECK(rank_loss(big, b).item() < 1e-12);
  // swapping negates the margin: L(m) - L(-m) = -m for the logistic loss
  Var p = tape.constant(Tensor::matrix(1, 2, {1.1, std::log(0.6)}));
  Var q = tape.constant(Tensor::matrix(1, 2, {0.2, std::log(0.8)}));
  const double m = 0.9 / std::sqrt(0.36 + 0.64);
  CHECK(rank_loss(p, q).item() - rank_loss(q, p).item() == doctest::Approx(-m).epsilon(1e-12));

  RewardNetConfig cfg;
  cfg.hidden = 6;
  RewardNet net(cfg, 3);
  const Tensor xa = Tensor::matrix(2, 2, {0.3, -1.0, 2.0, 0.5});
  const Tensor xb = Tensor::matrix(2, 2, {-0.4, 0.2, 1.0, 1.5});
  const std::vector<int> ids = {0, 3};
  auto loss_of = [&](const RewardNet& m, Tape& t) {
    return rank_loss(m.forward(t, t.constant(xa), ids), m.forward(t, t.constant(xb), ids));
  };
  Tape t2;
  backward(loss_of(net, t2), net.params());
  const auto gc = testing::compare_with_fd(net.params(), [&](const ParamStore& s) {
    RewardNet probe(cfg, s);
    Tape t(false);
    return loss_of(probe, t).item();
  });
  CHECK(gc.max_rel_err < 1e-4);
  // both head and encoder receive gradient
  CHECK(std::abs(net.params().get("reward/enc/l0.w").grad->at(0)) > 0.0);
  CHECK(std::abs(net.params().get("reward/head/l0.w").grad->at(0)) > 0.0);
}

TEST_CASE("gsb: partition, identity and antisymmetry") {
  std::vector<double> a, b;
  RngStream rng(4, "gsb");
  for (int i = 0; i < 1000; ++i) {
    a.push_back(rng.normal());
    b.push_back(rng.normal());
  }
  const Gsb same = gsb_compare(a, a, 0.1);
  CHECK(same.same == 1.0);
  const Gsb zero = gsb_compare(a, b, 0.0);
  CHECK(zero.same == 0.0);
  const Gsb ab = gsb_compare(a, b, 0.3), ba = gsb_compare(b, a, 0.3);
  CHECK(ab.good + ab.same + ab.bad == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ab.good == ba.bad);
  CHECK(ab.bad == ba.good);
  CHECK(ab.pairs == 1000);
  CHECK_THROWS_AS(gsb_compare(std::span<const double>(a).first(10), b, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(gsb_compare(a, b, -0.1), std::invalid_argument);

  const std::vector<double> r1 = {1.0, 0.0, 0.5}, r2 = {0.0, 1.0, 0.45};
  const Gsb h = gsb_compare(r1, r2, 0.1);
  CHECK(h.good == doctest::Approx(1.0 / 3));
  CHECK(h.bad == doctest::Approx(1.0 / 3));
  CHECK(h.same == doctest::Approx(1.0 / 3));
}

TEST_CASE("analytic reward: bundle matches components") {
  const auto ps = gen::default_point_prompts();
  RewardWeights w;
  w.stats = reference_stats(ps, 1);
  const AnalyticReward r(ps, w);
  const std::vector<double> x = {2.0, 1.5};
  const auto b = r.bundle(0, x);
  CHECK(b.alignment == reward_alignment(ps, 0, x));
  CHECK(b.motion == 0.0);
  CHECK(b.aggregate == aggregate(b.components(), w));
  CHECK(r(0, x) == b.aggregate);
}

TEST_CASE("reward model: learns the analytic ordering") {
  const auto ps = gen::default_point_prompts();
  RewardWeights w;
  w.stats = reference_stats(ps, 2);
  RewardNetConfig cfg;

  PreferenceConfig clean;
  clean.label_noise = 0.0;
  const auto pairs = make_preferences(ps, w, clean, 5);
  RewardTrainReport rep;
  const RewardNet net = train_reward_model(pairs, cfg, RewardTrainConfig{}, 5, &rep);
  MESSAGE("noiseless held-out accuracy " << rep.heldout_accuracy);
  CHECK(rep.heldout_accuracy >= 0.95);

  PreferenceConfig noisy;
  const auto npairs = make_preferences(ps, w, noisy, 6);
  RewardTrainReport nrep;
  train_reward_model(npairs, cfg, RewardTrainConfig{}, 6, &nrep);
  MESSAGE("noisy held-out oracle agreement " << nrep.heldout_oracle_agreement);
  CHECK(nrep.heldout_oracle_agreement >= 0.9);

  Tensor probe = Tensor::zeros({400, 2});
  RngStream rng(1, "probe");
  for (auto& v : probe.values) v = 5.0 * rng.normal();
  std::vector<int> ids(400);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i % 4);
  for (const auto& o : net.predict(probe, ids)) CHECK(o.uncertainty > 0.0);

  auto permuted = pairs;
  for (std::size_t i = 0; i < permuted.size(); ++i) {
    RngStream flip(9, "permute", i);
    permuted[i].preferred = flip.uniform() < 0.5 ? 0 : 1;
  }
  RewardTrainReport prep;
  RewardTrainConfig short_run;
  short_run.steps = 400;
  train_reward_model(permuted, cfg, short_run, 7, &prep);
  MESSAGE("permuted held-out accuracy " << prep.heldout_accuracy);
  CHECK(std::abs(prep.heldout_accuracy - 0.5) < 0.06);

  CHECK_THROWS_AS(train_reward_model(std::span(pairs).first(99), cfg, short_run, 1),
                  std::invalid_argument);
}
