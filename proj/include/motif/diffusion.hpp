#pragma once

// Forward noising, the training objective, and the reverse sampling loop.
// The sampler exposes two per-step override points: on_xhat0 may replace the
// clean prediction before the posterior step (composition), on_prev may
// replace the drawn sample afterwards (harmonization). Absent hooks leave the
// chain bit-exactly untouched.

#include <functional>
#include <vector>

#include "motif/ops.hpp"
#include "motif/rng.hpp"
#include "motif/schedule.hpp"
#include "motif/tensor.hpp"

namespace motif {

template <typename Scalar>
using DenoiseFn =
    std::function<Tensor<Scalar>(const Tensor<Scalar>& x_t, const std::vector<int>& t)>;

template <typename Scalar>
struct SampleHook {
  // Called with the clean prediction at step t (t = T..1).
  std::function<void(Tensor<Scalar>& xhat0, int t)> on_xhat0;
  // Called with the drawn sample at its own time t-1 (T-1..0).
  std::function<void(Tensor<Scalar>& x_prev, int t_prev)> on_prev;
};

enum class PosteriorVariance { BetaTilde, Beta };

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps; t = 0 returns x0.
template <typename Scalar>
Tensor<Scalar> q_sample(const Tensor<Scalar>& x0, int t, const Tensor<Scalar>& eps,
                        const NoiseSchedule& sched) {
  require(t >= 0 && t <= sched.steps,
          "q_sample: step " + std::to_string(t) + " outside [0," +
              std::to_string(sched.steps) + "]");
  if (t == 0) return x0.clone();
  require(eps.shape() == x0.shape(), "q_sample: noise shape mismatch");
  const Scalar c0 = static_cast<Scalar>(std::sqrt(sched.alpha_bar[static_cast<std::size_t>(t)]));
  const Scalar c1 =
      static_cast<Scalar>(std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t)]));
  Tensor<Scalar> out(x0.shape());
  out.values() = c0 * x0.values() + c1 * eps.values();
  return out;
}

// One reverse step: xhat0 = denoiser(x_t, t), then a draw from the DDPM
// posterior q(x_{t-1} | x_t, xhat0). No noise is added at t = 1.
template <typename Scalar>
Tensor<Scalar> p_sample_step(const Tensor<Scalar>& x_t, int t,
                             const DenoiseFn<Scalar>& denoiser, const NoiseSchedule& sched,
                             RngStream& rng, const SampleHook<Scalar>* hook = nullptr,
                             PosteriorVariance variance = PosteriorVariance::BetaTilde) {
  require(t >= 1 && t <= sched.steps,
          "p_sample_step: step " + std::to_string(t) + " outside [1," +
              std::to_string(sched.steps) + "]");
  Tensor<Scalar> xhat0 = denoiser(x_t, std::vector<int>(1, t));
  require(xhat0.shape() == x_t.shape(), "p_sample_step: denoiser changed the shape");
  if (hook && hook->on_xhat0) hook->on_xhat0(xhat0, t);

  const auto ts = static_cast<std::size_t>(t);
  const double ab_t = sched.alpha_bar[ts];
  const double ab_prev = sched.alpha_bar[ts - 1];
  const double beta_t = sched.beta[ts];
  const Scalar c_x0 = static_cast<Scalar>(std::sqrt(ab_prev) * beta_t / (1.0 - ab_t));
  const Scalar c_xt =
      static_cast<Scalar>(std::sqrt(sched.alpha[ts]) * (1.0 - ab_prev) / (1.0 - ab_t));

  Tensor<Scalar> x_prev(x_t.shape());
  x_prev.values() = c_x0 * xhat0.values() + c_xt * x_t.values();
  if (t > 1) {
    const double var = variance == PosteriorVariance::BetaTilde
                           ? beta_t * (1.0 - ab_prev) / (1.0 - ab_t)
                           : beta_t;
    const Scalar sd = static_cast<Scalar>(std::sqrt(var));
    for (Eigen::Index i = 0; i < x_prev.numel(); ++i)
      x_prev.values()[i] += sd * static_cast<Scalar>(rng.normal());
  }
  if (hook && hook->on_prev) hook->on_prev(x_prev, t - 1);
  return x_prev;
}

// Full reverse chain from pure noise; returns the x_0 estimate (n_frames x
// features, still in normalized feature space).
template <typename Scalar>
Tensor<Scalar> sample(const DenoiseFn<Scalar>& denoiser, const NoiseSchedule& sched,
                      Eigen::Index n_frames, Eigen::Index features, RngStream& rng,
                      const SampleHook<Scalar>* hook = nullptr,
                      PosteriorVariance variance = PosteriorVariance::BetaTilde) {
  require(n_frames >= 1 && features >= 1, "sample: empty output requested");
  Tensor<Scalar> x = Tensor<Scalar>::randn({1, n_frames, features}, rng);
  for (int t = sched.steps; t >= 1; --t)
    x = p_sample_step(x, t, denoiser, sched, rng, hook, variance);
  return reshape(x, {n_frames, features});
}

// L_simple over `batch` independent noisings of the same sequence: each batch
// element draws t uniform on [1,T] and fresh Gaussian noise, and the loss is
// the mean squared error between x0 and the prediction, averaged over batch,
// frames, and features. Runs on the active tape.
template <typename Scalar>
Tensor<Scalar> training_loss(const Tensor<Scalar>& x0, const DenoiseFn<Scalar>& denoiser,
                             const NoiseSchedule& sched, RngStream& rng, int batch) {
  require(x0.ndim() == 2, "training_loss: x0 must be NxF");
  require(batch >= 1, "training_loss: batch must be >= 1");
  const Eigen::Index n = x0.dim(0), f = x0.dim(1);

  Tensor<Scalar> x_t({batch, n, f});
  Tensor<Scalar> target({batch, n, f});
  std::vector<int> ts(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const int t = 1 + std::min<int>(sched.steps - 1,
                                    static_cast<int>(rng.uniform() * sched.steps));
    ts[static_cast<std::size_t>(b)] = t;
    const Scalar c0 =
        static_cast<Scalar>(std::sqrt(sched.alpha_bar[static_cast<std::size_t>(t)]));
    const Scalar c1 =
        static_cast<Scalar>(std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t)]));
    for (Eigen::Index i = 0; i < n * f; ++i) {
      const Scalar eps = static_cast<Scalar>(rng.normal());
      x_t.values()[b * n * f + i] = c0 * x0.values()[i] + c1 * eps;
      target.values()[b * n * f + i] = x0.values()[i];
    }
  }

  Tensor<Scalar> pred = denoiser(x_t, ts);
  require(pred.shape() == x_t.shape(), "training_loss: denoiser changed the shape");
  Tensor<Scalar> diff = sub(pred, target);
  return mean(mul(diff, diff));
}

}  // namespace motif
