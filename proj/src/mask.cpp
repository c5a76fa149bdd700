#include "motif/mask.hpp"

#include <algorithm>

namespace motif {

void RoiMask::validate() const {
  require(weights.rows() >= 1 && weights.cols() >= 1, "mask: empty weights");
  require(ramp_frames >= 0, "mask: negative ramp");
  for (Eigen::Index n = 0; n < weights.rows(); ++n)
    for (Eigen::Index f = 0; f < weights.cols(); ++f)
      require(weights(n, f) >= 0.0f && weights(n, f) <= 1.0f,
              "mask: weight outside [0,1] at frame " + std::to_string(n));
}

RoiMask build_mask(Eigen::Index n_frames, const FeatureLayout& layout,
                   const std::vector<FrameRange>& temporal_keep,
                   const std::vector<std::string>& spatial_keep,
                   Eigen::Index ramp_frames) {
  require(n_frames >= 1, "mask: needs at least one frame");
  require(ramp_frames >= 0, "mask: ramp must be >= 0");

  std::vector<FrameRange> ranges = temporal_keep;
  std::sort(ranges.begin(), ranges.end(),
            [](const FrameRange& a, const FrameRange& b) { return a.begin < b.begin; });
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const auto& r = ranges[i];
    require(r.begin >= 0 && r.end > r.begin && r.end <= n_frames,
            "mask: keep range [" + std::to_string(r.begin) + "," + std::to_string(r.end) +
                ") out of bounds for " + std::to_string(n_frames) + " frames");
    if (i > 0)
      require(ranges[i - 1].end <= r.begin,
              "mask: keep ranges [" + std::to_string(ranges[i - 1].begin) + "," +
                  std::to_string(ranges[i - 1].end) + ") and [" + std::to_string(r.begin) +
                  "," + std::to_string(r.end) + ") overlap");
  }

  auto covered = [&](Eigen::Index frame) {
    for (const auto& r : ranges)
      if (frame >= r.begin && frame < r.end) return true;
    return false;
  };

  // Temporal weights: 0 inside keeps, linear ramps toward borders that touch
  // synthesized frames. A ramp of length r inside a keep takes the values
  // (i+1)/(r+1), interpolating between the 0 of the kept interior and the 1
  // just outside.
  Eigen::VectorXf wt = Eigen::VectorXf::Ones(n_frames);
  for (const auto& r : ranges)
    for (Eigen::Index n = r.begin; n < r.end; ++n) wt[n] = 0.0f;
  for (const auto& r : ranges) {
    const bool ramp_left = r.begin > 0 && !covered(r.begin - 1);
    const bool ramp_right = r.end < n_frames && !covered(r.end);
    const auto len = r.end - r.begin;
    const Eigen::Index ramp = std::min(ramp_frames, len);
    for (Eigen::Index n = r.begin; n < r.end; ++n) {
      float v = 0.0f;
      if (ramp_left) {
        const Eigen::Index d = n - r.begin;
        if (d < ramp) v = std::max(v, static_cast<float>(ramp - d) / (ramp + 1));
      }
      if (ramp_right) {
        const Eigen::Index d = r.end - 1 - n;
        if (d < ramp) v = std::max(v, static_cast<float>(ramp - d) / (ramp + 1));
      }
      wt[n] = std::max(wt[n], v);
    }
  }

  Eigen::VectorXf ws = Eigen::VectorXf::Ones(layout.features);
  for (const auto& name : spatial_keep) {
    const auto& s = layout.slice(name);  // unknown names rejected here
    for (Eigen::Index f = s.begin; f < s.end; ++f) ws[f] = 0.0f;
  }

  RoiMask mask;
  mask.ramp_frames = ramp_frames;
  mask.weights.resize(n_frames, layout.features);
  for (Eigen::Index n = 0; n < n_frames; ++n)
    for (Eigen::Index f = 0; f < layout.features; ++f)
      mask.weights(n, f) = std::min(wt[n], ws[f]);
  mask.validate();
  return mask;
}

}  // namespace motif
