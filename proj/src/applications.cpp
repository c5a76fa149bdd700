#include "motif/applications.hpp"

#include <cmath>

namespace motif {

namespace {

DenoiseFn<float> eval_denoiser(const TrainedModel& model) {
  return [&model](const Tensor<float>& x, const std::vector<int>& t) {
    return denoise(model.params, x, t, /*training=*/false, nullptr);
  };
}

MotionSequence wrap_motion(const TrainedModel& model, const Tensor<float>& x0_norm) {
  MotionSequence m;
  m.skeleton = model.skeleton;
  m.layout = model.layout;
  m.fps = model.fps;
  m.dynamics = apply_denormalize(x0_norm, model.stats);
  if (m.layout.contacts > 0) {
    const auto cs = m.layout.contact_slice();
    for (Eigen::Index n = 0; n < m.frames(); ++n)
      for (Eigen::Index c = cs.begin; c < cs.end; ++c) {
        float& v = m.dynamics.data()[n * m.layout.features + c];
        v = std::clamp(v, 0.0f, 1.0f);
      }
  }
  m.validate();
  return m;
}

Eigen::Index pooling_alignment(const TrainedModel& model) {
  return Eigen::Index(1) << (model.params.config.depth - 1);
}

void check_aligned(const TrainedModel& model, Eigen::Index n, const char* who) {
  const Eigen::Index align = pooling_alignment(model);
  require(n % align == 0 && n >= 2 * align,
          std::string(who) + ": length " + std::to_string(n) +
              " incompatible with pooling at depth " +
              std::to_string(model.params.config.depth));
}

Tensor<float> normalized_reference(const TrainedModel& model, const MotionSequence& ref,
                                   const char* who) {
  require(ref.layout.features == model.layout.features,
          std::string(who) + ": reference feature width " +
              std::to_string(ref.layout.features) + " does not match the model's " +
              std::to_string(model.layout.features));
  return apply_normalize(ref.dynamics, model.stats);
}

}  // namespace

TrainedModel model_from_checkpoint(const Checkpoint& ckpt) {
  require(ckpt.noise_schedule == "cosine",
          "model: unsupported noise schedule '" + ckpt.noise_schedule + "'");
  TrainedModel m;
  m.params = ckpt.params;
  m.stats = ckpt.stats;
  m.skeleton = ckpt.skeleton;
  m.layout = ckpt.layout();
  m.fps = ckpt.fps;
  m.schedule = make_cosine_schedule(ckpt.diffusion_steps);
  return m;
}

MotionSequence sample_motion(const TrainedModel& model, Eigen::Index n_frames,
                             std::uint64_t seed) {
  return generate_long(model, n_frames, seed);
}

MotionSequence compose(const TrainedModel& model, const MotionSequence& reference,
                       const RoiMask& mask, std::uint64_t seed) {
  const Eigen::Index n = reference.frames(), f = model.layout.features;
  require(mask.frames() == n && mask.weights.cols() == f,
          "compose: mask shape does not match the reference motion");
  check_aligned(model, n, "compose");
  const Tensor<float> y = normalized_reference(model, reference, "compose");

  SampleHook<float> hook;
  hook.on_xhat0 = [&](Tensor<float>& xhat, int) {
    float* d = xhat.data();  // (1, n, f), contiguous
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < f; ++c) {
        const float w = mask.weights(i, c);
        if (w == 1.0f) continue;  // untouched, keeps degenerate masks bit-exact
        if (w == 0.0f)
          d[i * f + c] = y.data()[i * f + c];
        else
          d[i * f + c] = w * d[i * f + c] + (1.0f - w) * y.data()[i * f + c];
      }
  };

  RngStream rng(seed);
  const auto dn = eval_denoiser(model);
  return wrap_motion(model, sample(dn, model.schedule, n, f, rng, &hook));
}

MatRM<float> lowpass_resample(const MatRM<float>& values, int factor) {
  require(factor >= 1, "lowpass: filter factor must be >= 1");
  const Eigen::Index n = values.rows();
  if (factor == 1 || n < 3) return values;
  const Eigen::Index m = std::max<Eigen::Index>(2, (n - 1) / factor + 1);

  auto resample = [](const MatRM<float>& in, Eigen::Index out_len) {
    const Eigen::Index in_len = in.rows();
    MatRM<float> out(out_len, in.cols());
    for (Eigen::Index j = 0; j < out_len; ++j) {
      const double pos = static_cast<double>(j) * (in_len - 1) / (out_len - 1);
      const auto i = static_cast<Eigen::Index>(pos);
      const double frac = pos - static_cast<double>(i);
      if (frac == 0.0)
        out.row(j) = in.row(i);
      else
        out.row(j) = in.row(i) * static_cast<float>(1.0 - frac) +
                     in.row(i + 1) * static_cast<float>(frac);
    }
    return out;
  };
  return resample(resample(values, m), n);
}

MotionSequence harmonize(const TrainedModel& model, const HarmonizationSpec& spec,
                         std::uint64_t seed) {
  require(spec.filter_factor >= 1, "harmonize: filter factor must be >= 1");
  const Eigen::Index n = spec.reference.frames(), f = model.layout.features;
  check_aligned(model, n, "harmonize");
  const Tensor<float> ref = normalized_reference(model, spec.reference, "harmonize");
  const auto dn = eval_denoiser(model);

  // y0: a plain sample with the reference window assigned into it, or the
  // whole reference for style transfer.
  Tensor<float> y0({1, n, f});
  if (spec.window.has_value()) {
    const auto w = *spec.window;
    require(w.begin >= 0 && w.end > w.begin && w.end <= n,
            "harmonize: window [" + std::to_string(w.begin) + "," +
                std::to_string(w.end) + ") outside the reference length " +
                std::to_string(n));
    RngStream base_rng(derive_seed(seed, 1));
    Tensor<float> base = sample(dn, model.schedule, n, f, base_rng);
    y0.values() = base.values();
    for (Eigen::Index i = w.begin; i < w.end; ++i)
      for (Eigen::Index c = 0; c < f; ++c)
        y0.data()[i * f + c] = ref.data()[i * f + c];
  } else {
    y0.values() = ref.values();
  }

  SampleHook<float> hook;
  RngStream hook_rng(derive_seed(seed, 2));
  hook.on_prev = [&](Tensor<float>& x_prev, int t_prev) {
    Tensor<float> y_t;
    if (t_prev == 0) {
      y_t = y0.clone();
    } else {
      Tensor<float> eps = Tensor<float>::randn(y0.shape(), hook_rng);
      y_t = q_sample(y0, t_prev, eps, model.schedule);
    }
    if (spec.filter_factor == 1) {
      x_prev.values() = y_t.values();  // the low-pass is the identity
      return;
    }
    CMapMat<float> ym(y_t.data(), n, f);
    CMapMat<float> xm(x_prev.data(), n, f);
    const MatRM<float> low_y = lowpass_resample(ym, spec.filter_factor);
    const MatRM<float> low_x = lowpass_resample(xm, spec.filter_factor);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < f; ++c)
        x_prev.data()[i * f + c] += low_y(i, c) - low_x(i, c);
  };

  RngStream rng(seed);
  const SampleHook<float>* hook_ptr = spec.zero_filter ? nullptr : &hook;
  return wrap_motion(model, sample(dn, model.schedule, n, f, rng, hook_ptr));
}

MotionSequence generate_long(const TrainedModel& model, Eigen::Index n_target,
                             std::uint64_t seed) {
  require(n_target >= 1, "generate: needs at least one frame");
  const Eigen::Index align = pooling_alignment(model);
  Eigen::Index padded = (n_target + align - 1) / align * align;
  padded = std::max(padded, 2 * align);
  RngStream rng(seed);
  const auto dn = eval_denoiser(model);
  Tensor<float> x0 = sample(dn, model.schedule, padded, model.layout.features, rng);
  if (padded != n_target) x0 = slice(x0, 0, 0, n_target);
  return wrap_motion(model, x0);
}

std::vector<MotionSequence> generate_crowd(const TrainedModel& model, Eigen::Index n_frames,
                                           int count, std::uint64_t base_seed) {
  require(count >= 1, "crowd: count must be >= 1");
  std::vector<MotionSequence> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(sample_motion(model, n_frames, derive_seed(base_seed, static_cast<std::uint64_t>(i))));
  return out;
}

}  // namespace motif
