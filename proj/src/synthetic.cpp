#include <cmath>

#include "motif/rotations.hpp"
#include "motif/skeleton.hpp"

namespace motif {

namespace {

Skeleton biped_skeleton() {
  Skeleton s;
  s.units = 1.0;
  auto add = [&](const std::string& name, int parent, double x, double y, double z,
                 bool end_site = false) {
    Joint j;
    j.name = name;
    j.parent = parent;
    j.offset = Eigen::Vector3d(x, y, z);
    j.is_end_site = end_site;
    if (!end_site) j.rotation_order = "ZYX";
    s.joints.push_back(j);
    return static_cast<int>(s.joints.size()) - 1;
  };
  const int hips = add("Hips", -1, 0.0, 1.0, 0.0);
  const int spine = add("Spine", hips, 0.0, 0.20, 0.0);
  const int chest = add("Chest", spine, 0.0, 0.20, 0.0);
  const int head = add("Head", chest, 0.0, 0.25, 0.0);
  add("Head_End", head, 0.0, 0.15, 0.0, true);
  const int lhip = add("LeftHip", hips, 0.12, -0.05, 0.0);
  const int lfoot = add("LeftFoot", lhip, 0.0, -0.90, 0.0);
  add("LeftFoot_End", lfoot, 0.0, -0.05, 0.12, true);
  const int rhip = add("RightHip", hips, -0.12, -0.05, 0.0);
  const int rfoot = add("RightFoot", rhip, 0.0, -0.90, 0.0);
  add("RightFoot_End", rfoot, 0.0, -0.05, 0.12, true);
  s.contact_joints = {lfoot, rfoot};
  return s;
}

}  // namespace

MotionSequence make_synthetic_walk(Eigen::Index frames, double fps) {
  require(frames >= 2, "synthetic walk: needs at least two frames");
  MotionSequence m;
  m.skeleton = biped_skeleton();
  m.layout = FeatureLayout::ganimator(m.skeleton);
  m.fps = fps;
  m.dynamics = Tensor<float>({frames, m.layout.features});

  // Walking in place: the gait cycle spans `period` frames, legs in
  // antiphase, root bobbing at twice the step frequency.
  const double period = 40.0;
  struct Channel {
    const char* joint;
    int axis;
    double amp;
    double phase;
  };
  const Channel channels[] = {
      {"LeftHip", 0, 0.50, 0.0},
      {"RightHip", 0, 0.50, EIGEN_PI},
      {"LeftFoot", 0, 0.22, 0.5 * EIGEN_PI},
      {"RightFoot", 0, 0.22, 1.5 * EIGEN_PI},
      {"Spine", 2, 0.08, 0.0},
      {"Chest", 2, 0.05, 0.3},
      {"Head", 1, 0.05, 0.9},
      {"Hips", 1, 0.10, 0.2},
  };

  std::vector<int> slot(m.skeleton.joints.size(), -1);
  {
    int at = 0;
    for (std::size_t i = 0; i < m.skeleton.joints.size(); ++i)
      if (!m.skeleton.joints[i].is_end_site) slot[i] = at++;
  }

  for (Eigen::Index n = 0; n < frames; ++n) {
    const double phi = 2.0 * EIGEN_PI * static_cast<double>(n) / period;
    float* row = m.dynamics.data() + n * m.layout.features;
    // Amplitudes keep the feet below the contact threshold around each leg
    // reversal so the baked labels show real stance phases.
    row[0] = static_cast<float>(0.015 * std::sin(phi));          // lateral sway
    row[1] = static_cast<float>(0.008 * std::sin(2.0 * phi));    // vertical bob
    row[2] = 0.0f;

    for (std::size_t j = 0; j < m.skeleton.joints.size(); ++j) {
      if (m.skeleton.joints[j].is_end_site) continue;
      Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
      for (const auto& ch : channels) {
        if (m.skeleton.joints[j].name != ch.joint) continue;
        rot = rot * axis_rotation(ch.axis, ch.amp * std::sin(phi + ch.phase));
      }
      const Vec6d r6 = matrix_to_6d(rot);
      const Eigen::Index base = 3 + slot[j] * 6;
      for (int e = 0; e < 6; ++e) row[base + e] = static_cast<float>(r6[e]);
    }
  }

  bake_contact_labels(m, default_contact_threshold(m.skeleton, fps));
  m.validate();
  return m;
}

}  // namespace motif
