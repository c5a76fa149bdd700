#pragma once

// Inference-time applications, all realized as hooks into the sampler with
// no retraining: masked composition (in-betweening, expansion, trajectory and
// joint control), low-pass-guided harmonization (style transfer as the
// full-window case), one-shot long generation, and crowd sampling.

#include <optional>
#include <vector>

#include "motif/checkpoint.hpp"
#include "motif/diffusion.hpp"
#include "motif/mask.hpp"
#include "motif/skeleton.hpp"

namespace motif {

struct TrainedModel {
  DenoiserParams<float> params;
  FeatureStats stats;
  Skeleton skeleton;
  FeatureLayout layout;
  double fps = 30.0;
  NoiseSchedule schedule;
};

TrainedModel model_from_checkpoint(const Checkpoint& ckpt);

// Plain unconditional synthesis of n_frames, denormalized, contact labels
// clamped into [0,1].
MotionSequence sample_motion(const TrainedModel& model, Eigen::Index n_frames,
                             std::uint64_t seed);

// Masked composition: where the mask is 0 the output tracks the reference,
// where it is 1 content is synthesized, fractional weights blend the clean
// prediction with the reference at every step.
MotionSequence compose(const TrainedModel& model, const MotionSequence& reference,
                       const RoiMask& mask, std::uint64_t seed);

struct HarmonizationSpec {
  MotionSequence reference;
  // Frames of the base sample overridden by the reference; nullopt overrides
  // everything (style transfer).
  std::optional<FrameRange> window;
  int filter_factor = 2;  // 1 makes the low-pass the identity
  // Degenerate test mode: treat the low-pass as the zero operator, which
  // reduces the chain to plain sampling.
  bool zero_filter = false;
};

MotionSequence harmonize(const TrainedModel& model, const HarmonizationSpec& spec,
                         std::uint64_t seed);

// Single sampling pass at any target length (padded internally to the
// pooling alignment, trimmed back).
MotionSequence generate_long(const TrainedModel& model, Eigen::Index n_target,
                             std::uint64_t seed);

// Independent samples from per-index derived seeds.
std::vector<MotionSequence> generate_crowd(const TrainedModel& model,
                                           Eigen::Index n_frames, int count,
                                           std::uint64_t base_seed);

// Temporal low-pass: linear downsample by `factor`, linear upsample back,
// per feature column.
MatRM<float> lowpass_resample(const MatRM<float>& values, int factor);

}  // namespace motif
