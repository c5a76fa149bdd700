#pragma once

// Single-motion optimization loop: num_steps iterations of the diffusion
// loss over one normalized sequence, Adam updates, exponential learning-rate
// decay from the closed form lr0 * gamma^(step-1). Deterministic under a
// fixed seed, resumable bit-exactly from a trainer snapshot.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "motif/denoiser.hpp"
#include "motif/diffusion.hpp"
#include "motif/schedule.hpp"

namespace motif {

struct TrainConfig {
  int batch_size = 64;
  long num_steps = 60000;
  double lr = 1e-4;
  double lr_gamma = 0.99998;
  long warmup_steps = 0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  long log_every = 100;
  long checkpoint_every = 0;  // 0: final checkpoint only

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (num_steps < 0) throw ConfigError("train: num_steps must be >= 0");
    if (lr_gamma <= 0.0 || lr_gamma > 1.0)
      throw ConfigError("train: lr_gamma must lie in (0,1]");
    if (lr < 0.0 || weight_decay < 0.0 || warmup_steps < 0)
      throw ConfigError("train: negative hyperparameter");
  }
};

struct TrainLogEntry {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<TrainLogEntry> log;
  long steps_run = 0;
  double final_loss = 0.0;
};

// Adam with bias correction and decoupled weight decay.
struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::vector<ArrX<Scalar>> m, v;
  long steps = 0;

  static AdamState init(const DenoiserParams<Scalar>& params) {
    AdamState st;
    for (const auto& [name, t] : params.named) {
      st.m.push_back(ArrX<Scalar>::Zero(t.numel()));
      st.v.push_back(ArrX<Scalar>::Zero(t.numel()));
    }
    return st;
  }
};

// One Adam update for a single tensor; step_count is 1-based and shared by
// every tensor of the same optimizer step.
template <typename Scalar>
void adam_update(Tensor<Scalar>& param, ArrX<Scalar>& m, ArrX<Scalar>& v, long step_count,
                 double lr, double weight_decay = 0.0, AdamConstants k = {}) {
  const Eigen::Index n = param.numel();
  const Scalar b1 = static_cast<Scalar>(k.beta1), b2 = static_cast<Scalar>(k.beta2);
  const Scalar bc1 = static_cast<Scalar>(1.0 - std::pow(k.beta1, step_count));
  const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(k.beta2, step_count));
  const Scalar lrs = static_cast<Scalar>(lr);
  const Scalar epss = static_cast<Scalar>(k.eps);
  const Scalar* g = param.has_grad() ? param.grad().data() : nullptr;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar gi = g ? g[i] : Scalar(0);
    m[i] = b1 * m[i] + (Scalar(1) - b1) * gi;
    v[i] = b2 * v[i] + (Scalar(1) - b2) * gi * gi;
    const Scalar mhat = m[i] / bc1;
    const Scalar vhat = v[i] / bc2;
    Scalar upd = lrs * mhat / (std::sqrt(vhat) + epss);
    if (weight_decay > 0.0)
      upd += lrs * static_cast<Scalar>(weight_decay) * param.values()[i];
    param.values()[i] -= upd;
  }
}

template <typename Scalar>
void adam_step(DenoiserParams<Scalar>& params, AdamState<Scalar>& state, double lr,
               double weight_decay = 0.0, AdamConstants k = {}) {
  ++state.steps;
  for (std::size_t i = 0; i < params.named.size(); ++i)
    adam_update(params.named[i].second, state.m[i], state.v[i], state.steps, lr,
                weight_decay, k);
}

// Applied learning rate for a 1-based step index (closed form, exact).
inline double lr_at_step(const TrainConfig& cfg, long step) {
  double lr = cfg.lr * std::pow(cfg.lr_gamma, static_cast<double>(step - 1));
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    lr *= static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return lr;
}

struct TrainerState {
  DenoiserParams<float> params;
  AdamState<float> adam;
  RngStream rng;
  long next_step = 1;
};

inline TrainerState init_trainer(const DenoiserConfig& model_cfg, Eigen::Index feature_dim,
                                 const TrainConfig& cfg) {
  cfg.validate();
  TrainerState st;
  st.rng = RngStream(cfg.seed);
  st.params = DenoiserParams<float>::init(model_cfg, feature_dim, st.rng);
  st.adam = AdamState<float>::init(st.params);
  return st;
}

struct TrainCallbacks {
  std::function<void(const TrainLogEntry&)> on_log;
  std::function<void(long step, const TrainerState&)> on_checkpoint;
};

// Runs steps next_step..num_steps on one normalized sequence. Aborts with
// DivergenceError after 10 consecutive non-finite losses.
inline TrainReport train_steps(TrainerState& st, const Tensor<float>& x0_normalized,
                               const NoiseSchedule& sched, const TrainConfig& cfg,
                               const TrainCallbacks* callbacks = nullptr) {
  cfg.validate();
  require(x0_normalized.ndim() == 2, "train: motion must be NxF");
  TrainReport report;

  DenoiseFn<float> model = [&](const Tensor<float>& x, const std::vector<int>& t) {
    return denoise(st.params, x, t, /*training=*/true, &st.rng);
  };

  int non_finite_run = 0;
  for (long step = st.next_step; step <= cfg.num_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_step(cfg, step);

    double loss_value = 0.0;
    {
      Tape<float> tape;
      Tensor<float> loss =
          training_loss(x0_normalized, model, sched, st.rng, cfg.batch_size);
      loss_value = loss.item();
      if (std::isfinite(loss_value)) {
        tape.backward(loss);
        adam_step(st.params, st.adam, lr, cfg.weight_decay);
      }
      st.params.zero_grad();
    }

    if (!std::isfinite(loss_value)) {
      if (++non_finite_run >= 10)
        throw DivergenceError("training diverged: 10 consecutive non-finite losses, last at step " +
                              std::to_string(step));
    } else {
      non_finite_run = 0;
    }

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    st.next_step = step + 1;
    report.steps_run++;
    report.final_loss = loss_value;
    if (step == 1 || step == cfg.num_steps ||
        (cfg.log_every > 0 && step % cfg.log_every == 0)) {
      TrainLogEntry entry{step, loss_value, lr, wall_ms};
      report.log.push_back(entry);
      if (callbacks && callbacks->on_log) callbacks->on_log(entry);
    }
    if (callbacks && callbacks->on_checkpoint && cfg.checkpoint_every > 0 &&
        step % cfg.checkpoint_every == 0 && step != cfg.num_steps)
      callbacks->on_checkpoint(step, st);
  }
  return report;
}

}  // namespace motif
