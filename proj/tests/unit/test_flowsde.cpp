#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fgpl/flowsde.hpp"

using namespace fgpl;
using namespace fgpl::flow;

namespace {

GaussianOracle test_oracle() {
  Eigen::VectorXd mu(2);
  mu << 1.0, -0.5;
  Eigen::MatrixXd cov(2, 2);
  cov << 0.5, 0.15, 0.15, 0.3;
  return GaussianOracle(mu, cov);
}

Tensor terminal_samples(const std::vector<Trajectory>& trs) {
  const std::size_t d = trs.front().terminal().size();
  Tensor out = Tensor::zeros({trs.size(), d});
  for (std::size_t b = 0; b < trs.size(); ++b)
    std::copy(trs[b].terminal().begin(), trs[b].terminal().end(), out.values.begin() + b * d);
  return out;
}

std::vector<Trajectory> run(const GaussianOracle& o, const NoiseSchedule& s, std::size_t n,
                            const std::function<std::vector<std::size_t>(std::size_t)>& steps,
                            const char* tag) {
  std::vector<int> prompts(n, 0);
  std::vector<std::vector<std::size_t>> sets(n);
  std::vector<RngStream> streams;
  for (std::size_t i = 0; i < n; ++i) {
    sets[i] = steps(i);
    streams.emplace_back(123, tag, 0, i);
  }
  return sample_mixed_batch(o.velocity_fn(), s, 2, prompts, sets, streams);
}

}  // namespace

TEST_CASE("sigma: closed form and domain") {
  NoiseSchedule s;
  CHECK(sigma(s, 0.5) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(sigma(s, 0.8) == doctest::Approx(1.4).epsilon(1e-14));
  CHECK_THROWS_AS(sigma(s, 0.999), std::domain_error);
  CHECK_THROWS_AS(sigma(s, 0.01), std::domain_error);
}

TEST_CASE("lambda_rect: hand values") {
  // 0.2/0.7 + 0.7*0.2*0.5/1.0 and 0.2/1.4 + 1.4*0.2*0.2/1.6
  CHECK(lambda_rect(0.5, 0.04, 0.7) == doctest::Approx(0.2 / 0.7 + 0.07).epsilon(1e-14));
  CHECK(std::abs(lambda_rect(0.5, 0.04, 0.7) - 0.3557) < 1e-4);
  CHECK(std::abs(lambda_rect(0.8, 0.04, 1.4) - 0.1779) < 1e-4);
  CHECK_THROWS_AS(lambda_rect(0.0, 0.04, 0.7), std::domain_error);
}

TEST_CASE("lambda_rect: sqrt(dt) scaling and monotone decay as dt -> 0") {
  RngStream rng(1, "lambda-prop");
  for (int i = 0; i < 200; ++i) {
    const double t = rng.uniform(0.04, 0.96);
    const double dt = rng.uniform(1e-4, 0.2);
    const double sig = rng.uniform(0.05, 3.0);
    const double c = rng.uniform(0.01, 10.0);
    const double base = lambda_rect(t, dt, sig);
    CHECK(base > 0.0);
    CHECK(lambda_rect(t, c * dt, sig) == doctest::Approx(std::sqrt(c) * base).epsilon(1e-12));
  }
  double prev = lambda_rect(0.5, 0.04, 0.7);
  for (double dt = 0.02; dt > 1e-8; dt /= 2) {
    const double l = lambda_rect(0.5, dt, 0.7);
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("ode_step: hand arithmetic") {
  const std::vector<double> x = {1.0, 1.0}, v = {1.0, -1.0}, zero = {0.0, 0.0};
  auto y = ode_step(x, 0.04, v);
  CHECK(y[0] == doctest::Approx(0.96));
  CHECK(y[1] == doctest::Approx(1.04));
  CHECK(ode_step(x, 0.04, zero) == x);
}

TEST_CASE("sde_step: kernel std, degenerate noiseless limit, domain") {
  NoiseSchedule s;
  const std::vector<double> x = {0.3, -0.2}, v = {0.5, 1.5}, z = {0.0, 0.0};
  auto st = sde_step(s, x, 0.5, v, z);
  CHECK(st.kernel.std == doctest::Approx(0.14).epsilon(1e-12));
  CHECK(st.next == st.kernel.mean);
  auto k = sde_kernel(x, 0.5, 0.04, 1e-9, v);
  auto o = ode_step(x, 0.04, v);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(k.mean[i] - o[i]) < 1e-15);
  CHECK_THROWS_AS(sde_step(s, x, 1.0, v, z), std::domain_error);
}

TEST_CASE("transition_logprob: values and shape") {
  TransitionKernel k{{0.2, -0.1}, 0.1};
  std::vector<double> at_mean = {0.2, -0.1};
  CHECK(std::abs(transition_logprob(k, at_mean) - 2.7673) < 1e-3);
  CHECK(transition_logprob(k, at_mean) == doctest::Approx(-std::log(2 * std::numbers::pi * 0.01)));
  std::vector<double> shifted = {0.3, -0.1};
  CHECK(transition_logprob(k, at_mean) - transition_logprob(k, shifted) ==
        doctest::Approx(0.5).epsilon(1e-12));
  RngStream rng(2, "logp-mode");
  for (int i = 0; i < 50; ++i) {
    auto p = rng.gaussian(2);
    p[0] = 0.2 + 0.3 * p[0];
    p[1] = -0.1 + 0.3 * p[1];
    CHECK(transition_logprob(k, p) <= transition_logprob(k, at_mean));
  }
  CHECK_THROWS(transition_logprob(TransitionKernel{{0.0, 0.0}, 0.0}, at_mean));
  CHECK_THROWS(transition_logprob(k, std::vector<double>{1.0}));
}

TEST_CASE("gaussian oracle: closed forms") {
  GaussianOracle iso(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  CHECK(iso.marginal_cov(0.5).isApprox(0.5 * Eigen::MatrixXd::Identity(2, 2)));
  auto o = test_oracle();
  CHECK(o.marginal_cov(1.0).isApprox(Eigen::MatrixXd::Identity(2, 2)));
  CHECK(o.marginal_mean(1.0).norm() == 0.0);
  Eigen::VectorXd x(2);
  x << 0.7, -1.3;
  CHECK(iso.score(x, 0.5).isApprox(-2.0 * x));
  CHECK_THROWS(GaussianOracle(Eigen::VectorXd::Zero(2), -Eigen::MatrixXd::Identity(2, 2)));
}

TEST_CASE("gaussian oracle: velocity agrees with the score identity") {
  // Independent route: v = -(x + t·s)/(1 - t), rearranged from s = -(x + (1-t)v)/t.
  auto o = test_oracle();
  RngStream rng(3, "oracle-identity");
  for (double t : {0.1, 0.35, 0.5, 0.8, 0.95}) {
    for (int i = 0; i < 10; ++i) {
      auto xv = rng.gaussian(2);
      Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(xv.data(), 2);
      const Eigen::VectorXd via_score = -(x + t * o.score(x, t)) / (1.0 - t);
      CHECK((o.velocity(x, t) - via_score).norm() < 1e-12);
      Tensor xb = Tensor::matrix(1, 2, xv);
      auto vb = o.velocity_fn()(xb, t);
      CHECK(std::abs(vb.values[0] - o.velocity(x, t)[0]) < 1e-12);
    }
  }
}

TEST_CASE("ODE transport reaches the data law") {
  auto o = test_oracle();
  NoiseSchedule s;
  auto trs = run(o, s, 10000, [](std::size_t) { return std::vector<std::size_t>{}; }, "ode");
  auto m = empirical_moments(terminal_samples(trs));
  CHECK((m.mean - o.data_mean()).cwiseAbs().maxCoeff() < 0.05);
  CHECK(max_abs_diff(m.cov, o.data_cov()) < 0.1);
}

TEST_CASE("SDE and mixed sampling preserve the ODE marginal") {
  auto o = test_oracle();
  NoiseSchedule s;
  const auto all = s.eligible_indices();
  auto ode = empirical_moments(terminal_samples(
      run(o, s, 10000, [](std::size_t) { return std::vector<std::size_t>{}; }, "m-ode")));
  auto sde = empirical_moments(
      terminal_samples(run(o, s, 10000, [&](std::size_t) { return all; }, "m-sde")));
  auto mixed = empirical_moments(terminal_samples(run(
      o, s, 10000, [&](std::size_t i) { return std::vector<std::size_t>{all[i % all.size()]}; },
      "m-mixed")));
  for (const auto* m : {&sde, &mixed}) {
    CHECK((m->mean - ode.mean).cwiseAbs().maxCoeff() < 0.05);
    CHECK(max_abs_diff(m->cov, ode.cov) < 0.1);
  }
}

TEST_CASE("mixed trajectory: isotemporal contract") {
  auto o = test_oracle();
  NoiseSchedule s;
  RngStream a(9, "traj", 1, 2), b(9, "traj", 1, 2);
  auto tr = sample_mixed_trajectory(o.velocity_fn(), 3, s, 12, a, 2);
  CHECK(s.time(tr.sde_index()) == doctest::Approx(0.52));
  CHECK(tr.isotemporal());
  CHECK(tr.states.size() == 26);
  CHECK(tr.prompt == 3);
  auto again = sample_mixed_trajectory(o.velocity_fn(), 3, s, 12, b, 2);
  CHECK(again.states == tr.states);
  CHECK(transition_logprob(tr.kernel_old(), tr.states[13]) == tr.logp_old());
  // Every other step is deterministic given its predecessor.
  auto vel = o.velocity_fn();
  for (std::size_t k = 0; k < 25; ++k) {
    if (k == 12) continue;
    auto v = vel(Tensor::matrix(1, 2, tr.states[k]), s.time(k));
    CHECK(ode_step(tr.states[k], s.dt(), v.values) == tr.states[k + 1]);
  }
  RngStream c(9, "traj");
  CHECK_THROWS_AS(sample_mixed_trajectory(o.velocity_fn(), 0, s, 0, c, 2), std::out_of_range);
  CHECK_THROWS_AS(sample_mixed_trajectory(o.velocity_fn(), 0, s, 25, c, 2), std::out_of_range);
}

TEST_CASE("mixed trajectory: full stochastic set records every step") {
  auto o = test_oracle();
  NoiseSchedule s;
  const auto all = s.eligible_indices();
  CHECK(all.size() == 24);
  int p[] = {0};
  std::vector<std::size_t> sets[] = {all};
  RngStream st(4, "full");
  auto tr = sample_mixed_batch(o.velocity_fn(), s, 2, p, sets, std::span<RngStream>(&st, 1));
  REQUIRE(tr[0].sde.size() == all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(tr[0].sde[i].index == all[i]);
    CHECK(transition_logprob(tr[0].sde[i].kernel_old, tr[0].states[all[i] + 1]) ==
          tr[0].sde[i].logp_old);
  }
  CHECK_THROWS_AS(tr[0].sde_index(), std::logic_error);
}

TEST_CASE("batched sampling is independent of batch composition") {
  auto o = test_oracle();
  NoiseSchedule s;
  std::vector<int> prompts = {0, 0, 0};
  std::vector<std::vector<std::size_t>> sets = {{3}, {7}, {20}};
  std::vector<RngStream> streams = {RngStream(5, "b", 0, 0), RngStream(5, "b", 0, 1),
                                    RngStream(5, "b", 0, 2)};
  auto batch = sample_mixed_batch(o.velocity_fn(), s, 2, prompts, sets, streams);
  RngStream solo(5, "b", 0, 1);
  auto one = sample_mixed_trajectory(o.velocity_fn(), 0, s, 7, solo, 2);
  CHECK(one.states == batch[1].states);
}
