#pragma once

// Region-of-interest masks for composition: per-frame/per-feature weights in
// [0,1] where 1 means "synthesize" and 0 means "keep the reference". Kept
// temporal ranges get linear ramps at every border that touches synthesized
// frames, so the blend into generated content is seamless.

#include <string>
#include <vector>

#include "motif/skeleton.hpp"

namespace motif {

struct FrameRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;  // half-open
};

struct RoiMask {
  MatRM<float> weights;  // n_frames x features
  Eigen::Index ramp_frames = 0;

  Eigen::Index frames() const { return weights.rows(); }
  void validate() const;
};

// Kept ranges must be disjoint. Spatial keeps name feature slices of the
// layout (e.g. "rot:LeftArm", "root_pos") and hold for all frames; the
// combined weight is min(temporal, spatial).
RoiMask build_mask(Eigen::Index n_frames, const FeatureLayout& layout,
                   const std::vector<FrameRange>& temporal_keep,
                   const std::vector<std::string>& spatial_keep,
                   Eigen::Index ramp_frames);

}  // namespace motif
