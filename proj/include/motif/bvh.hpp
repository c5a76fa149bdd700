#pragma once

// BVH ingestion and export (HIERARCHY/MOTION text format). Parsing keeps the
// raw per-frame channel values; conversion into the feature representation is
// a separate step so files can be inspected loss-free.

#include <string>
#include <vector>

#include "motif/skeleton.hpp"

namespace motif {

struct BvhDocument {
  Skeleton skeleton;
  std::vector<std::vector<std::string>> joint_channels;  // per joint, in file order
  MatRM<double> frames;                                  // n_frames x total_channels
  double fps = 30.0;

  Eigen::Index channel_count() const {
    Eigen::Index n = 0;
    for (const auto& c : joint_channels) n += static_cast<Eigen::Index>(c.size());
    return n;
  }
};

BvhDocument parse_bvh(const std::string& text);
BvhDocument parse_bvh_file(const std::string& path);

// Serializes a GanimatorStyle motion: root position plus per-joint Euler
// angles (6D features decomposed in each joint's recorded rotation order,
// ZYX when none is recorded), written with 6 decimal places, Frame Time =
// 1/fps, coordinates right-handed Y-up.
std::string write_bvh(const MotionSequence& motion);
void write_bvh_file(const MotionSequence& motion, const std::string& path);

// Builds the GanimatorStyle feature representation from raw BVH channels.
// Contact joints are matched by name when given, otherwise guessed from
// joint names (foot/toe/ankle); labels are baked from FK velocities with
// `contact_eps` (< 0 selects the default threshold for the file's fps).
MotionSequence motion_from_bvh(const BvhDocument& doc,
                               const std::vector<std::string>& contact_joint_names = {},
                               double contact_eps = -1.0);

}  // namespace motif
