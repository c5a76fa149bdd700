#include "doctest.h"

#include <cmath>
#include <vector>

#include "motif/diffusion.hpp"
#include "motif/schedule.hpp"
#include "test_util.hpp"

using motif::NoiseSchedule;
using motif::Tensor;

namespace {

// A stateless stand-in denoiser: a fixed contraction of the noisy input.
template <typename S>
motif::DenoiseFn<S> contraction_denoiser(S factor) {
  return [factor](const Tensor<S>& x, const std::vector<int>&) {
    Tensor<S> out(x.shape());
    out.values() = factor * x.values();
    return out;
  };
}

}  // namespace

TEST_CASE("cosine schedule: alpha_bar starts at 1, decreases strictly, ends below 1e-3") {
  const auto sched = motif::make_cosine_schedule(1000);
  CHECK(sched.alpha_bar[0] == 1.0);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(sched.alpha_bar[t] < sched.alpha_bar[t - 1]);
    CHECK(sched.beta[t] > 0.0);
    CHECK(sched.beta[t] <= 0.999);
  }
  CHECK(sched.alpha_bar[1000] < 1e-3);
  // direct evaluation of the closed form away from the clipped tail
  const double s = 0.008, pi = 3.14159265358979323846;
  auto f = [&](double t) {
    const double c = std::cos((t / 1000.0 + s) / (1.0 + s) * pi / 2.0);
    return c * c;
  };
  for (int t : {1, 10, 250, 500, 900})
    CHECK(sched.alpha_bar[t] == doctest::Approx(f(t) / f(0)).epsilon(1e-9));
}

TEST_CASE("cosine schedule: alpha_bar is exactly the running product of alpha") {
  const auto sched = motif::make_cosine_schedule(100);
  double prod = 1.0;
  for (int t = 1; t <= 100; ++t) {
    prod *= sched.alpha[t];
    CHECK(sched.alpha_bar[t] == prod);
  }
}

TEST_CASE("cosine schedule: fewer than 2 steps rejected") {
  CHECK_THROWS_AS(motif::make_cosine_schedule(1), motif::DataError);
}

TEST_CASE("q_sample: t = 0 returns x0 exactly, large t approaches the noise") {
  const auto sched = motif::make_cosine_schedule(1000);
  motif::RngStream rng(1);
  auto x0 = Tensor<double>::randn({6, 4}, rng);
  auto eps = Tensor<double>::randn({6, 4}, rng);
  CHECK(testutil::bitwise_equal(motif::q_sample(x0, 0, eps, sched), x0));
  auto xt = motif::q_sample(x0, 1000, eps, sched);
  CHECK(testutil::max_abs_diff(xt, eps) < 0.15);  // sqrt(1 - 1e-3) within 5e-4 of 1
  CHECK_THROWS_AS(motif::q_sample(x0, 1001, eps, sched), motif::DataError);
}

TEST_CASE("q_sample: linear in (x0, eps) by superposition") {
  const auto sched = motif::make_cosine_schedule(100);
  motif::RngStream rng(2);
  auto a = Tensor<double>::randn({5, 3}, rng);
  auto b = Tensor<double>::randn({5, 3}, rng);
  auto ea = Tensor<double>::randn({5, 3}, rng);
  auto eb = Tensor<double>::randn({5, 3}, rng);
  Tensor<double> ab(a.shape()), eab(a.shape());
  ab.values() = a.values() + b.values();
  eab.values() = ea.values() + eb.values();
  for (int t : {1, 17, 60, 100}) {
    auto lhs = motif::q_sample(ab, t, eab, sched);
    auto ra = motif::q_sample(a, t, ea, sched);
    auto rb = motif::q_sample(b, t, eb, sched);
    Tensor<double> rhs(a.shape());
    rhs.values() = ra.values() + rb.values();
    CHECK(testutil::max_abs_diff(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("q_sample: Monte-Carlo mean and variance match the closed form within 2%") {
  const auto sched = motif::make_cosine_schedule(100);
  const int t = 40;
  const double ab = sched.alpha_bar[t];
  motif::RngStream rng(3);
  auto x0 = Tensor<double>::from({2}, {1.5, -0.7});
  const int draws = 100000;
  Eigen::Array2d mean = Eigen::Array2d::Zero(), m2 = Eigen::Array2d::Zero();
  for (int i = 0; i < draws; ++i) {
    auto eps = Tensor<double>::randn({2}, rng);
    auto xt = motif::q_sample(x0, t, eps, sched);
    for (int e = 0; e < 2; ++e) {
      mean[e] += xt.data()[e];
      m2[e] += xt.data()[e] * xt.data()[e];
    }
  }
  mean /= draws;
  m2 = m2 / draws - mean * mean;
  for (int e = 0; e < 2; ++e) {
    CHECK(std::abs(mean[e] - std::sqrt(ab) * x0.data()[e]) <
          0.02 * std::abs(std::sqrt(ab) * x0.data()[e]) + 0.005);
    CHECK(std::abs(m2[e] - (1.0 - ab)) < 0.02 * (1.0 - ab));
  }
}

TEST_CASE("training_loss: perfect oracle gives zero, zero denoiser gives mean(x0^2)") {
  const auto sched = motif::make_cosine_schedule(50);
  motif::RngStream rng(4);
  auto x0 = Tensor<double>::randn({10, 5}, rng);

  motif::DenoiseFn<double> oracle = [&](const Tensor<double>& x, const std::vector<int>&) {
    Tensor<double> out(x.shape());
    const Eigen::Index nf = x0.numel();
    for (Eigen::Index b = 0; b < x.dim(0); ++b)
      out.values().segment(b * nf, nf) = x0.values();
    return out;
  };
  motif::RngStream r1(7);
  CHECK(motif::training_loss(x0, oracle, sched, r1, 8).item() == doctest::Approx(0.0));

  motif::DenoiseFn<double> zero = [](const Tensor<double>& x, const std::vector<int>&) {
    return Tensor<double>::zeros(x.shape());
  };
  motif::RngStream r2(8);
  const double loss = motif::training_loss(x0, zero, sched, r2, 8).item();
  CHECK(loss == doctest::Approx(x0.values().square().mean()).epsilon(1e-9));
}

TEST_CASE("training_loss: reproducible bitwise under a fixed seed") {
  const auto sched = motif::make_cosine_schedule(50);
  motif::RngStream rng(5);
  auto x0 = Tensor<float>::randn({12, 6}, rng);
  auto dn = contraction_denoiser<float>(0.5f);
  motif::RngStream ra(99), rb(99);
  const float la = motif::training_loss(x0, dn, sched, ra, 16).item();
  const float lb = motif::training_loss(x0, dn, sched, rb, 16).item();
  CHECK(la == lb);
}

TEST_CASE("p_sample_step: t = 1 adds no noise; t = 0 rejected") {
  const auto sched = motif::make_cosine_schedule(30);
  motif::RngStream rng(6);
  auto x1 = Tensor<double>::randn({1, 4, 3}, rng);
  auto dn = contraction_denoiser<double>(0.8);
  motif::RngStream ra(1), rb(2);  // different streams: output must not depend on them
  auto a = motif::p_sample_step(x1, 1, dn, sched, ra);
  auto b = motif::p_sample_step(x1, 1, dn, sched, rb);
  CHECK(testutil::bitwise_equal(a, b));
  CHECK_THROWS_AS(motif::p_sample_step(x1, 0, dn, sched, ra), motif::DataError);
}

TEST_CASE("p_sample_step: posterior mean and variance match an independent recomputation") {
  const auto sched = motif::make_cosine_schedule(64);
  motif::RngStream rng(7);
  auto xt = Tensor<double>::randn({1, 3, 2}, rng);
  auto dn = contraction_denoiser<double>(1.0);  // xhat0 = x_t
  for (int t : {2, 10, 40, 64}) {
    motif::RngStream step_rng(1000 + t), oracle_rng(1000 + t);
    auto out = motif::p_sample_step(xt, t, dn, sched, step_rng);
    // coefficient recomputation oracle
    const double ab_t = sched.alpha_bar[t], ab_p = sched.alpha_bar[t - 1];
    const double c0 = std::sqrt(ab_p) * sched.beta[t] / (1.0 - ab_t);
    const double c1 = std::sqrt(1.0 - sched.beta[t]) * (1.0 - ab_p) / (1.0 - ab_t);
    const double var = sched.beta[t] * (1.0 - ab_p) / (1.0 - ab_t);
    for (Eigen::Index i = 0; i < xt.numel(); ++i) {
      const double mu = (c0 + c1) * xt.data()[i];
      const double z = oracle_rng.normal();
      CHECK(std::abs(out.data()[i] - (mu + std::sqrt(var) * z)) < 1e-12);
    }
  }
}

TEST_CASE("p_sample_step: a hook pinning xhat0 everywhere reproduces the target") {
  const auto sched = motif::make_cosine_schedule(50);
  motif::RngStream rng(8);
  auto y = Tensor<float>::randn({1, 6, 4}, rng);
  motif::SampleHook<float> hook;
  hook.on_xhat0 = [&](Tensor<float>& xhat, int) { xhat.values() = y.values(); };
  auto dn = contraction_denoiser<float>(0.3f);
  motif::RngStream srng(9);
  auto out =
      motif::sample(dn, sched, 6, 4, srng, &hook);
  CHECK((out.values() - y.values()).abs().maxCoeff() < 1e-2);
}

TEST_CASE("sample: deterministic per seed, different across seeds, exactly T evaluations") {
  const auto sched = motif::make_cosine_schedule(25);
  int evals = 0;
  motif::DenoiseFn<float> dn = [&](const Tensor<float>& x, const std::vector<int>&) {
    ++evals;
    Tensor<float> out(x.shape());
    out.values() = 0.5f * x.values();
    return out;
  };
  motif::RngStream r1(42), r2(42), r3(43);
  auto a = motif::sample(dn, sched, 8, 3, r1);
  CHECK(evals == 25);
  auto b = motif::sample(dn, sched, 8, 3, r2);
  auto c = motif::sample(dn, sched, 8, 3, r3);
  CHECK(testutil::bitwise_equal(a, b));
  CHECK(testutil::max_abs_diff(a, c) > 0.0);
}

TEST_CASE("sample: lengths beyond any training length stay finite") {
  const auto sched = motif::make_cosine_schedule(25);
  auto dn = contraction_denoiser<float>(0.5f);
  motif::RngStream rng(11);
  auto out = motif::sample(dn, sched, 1200, 5, rng);  // 4x a typical 300-frame input
  CHECK(out.dim(0) == 1200);
  CHECK(out.values().isFinite().all());
}
