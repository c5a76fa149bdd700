#include "motif/skeleton.hpp"

#include <algorithm>

namespace motif {

void Skeleton::validate() const {
  require(!joints.empty(), "skeleton: no joints");
  int roots = 0;
  for (int i = 0; i < joint_count(); ++i) {
    const auto& j = joints[static_cast<std::size_t>(i)];
    if (j.parent < 0) {
      ++roots;
      require(i == 0, "skeleton: root must be the first joint");
    } else {
      require(j.parent < i, "skeleton: joint '" + j.name +
                                "' appears before its parent (topological order violated)");
    }
    if (!j.is_end_site)
      require(j.rotation_order.size() == 3,
              "skeleton: joint '" + j.name + "' missing rotation order");
  }
  require(roots == 1, "skeleton: expected exactly one root, found " + std::to_string(roots));
  for (int c : contact_joints)
    require(c >= 0 && c < joint_count(),
            "skeleton: contact joint index " + std::to_string(c) + " out of range");
  require(units > 0, "skeleton: units must be positive");
}

FeatureLayout FeatureLayout::ganimator_generic(Eigen::Index j, Eigen::Index c) {
  FeatureLayout l;
  l.kind = LayoutKind::GanimatorStyle;
  l.joints = j;
  l.rot_dims = 6;
  l.contacts = c;
  l.features = 3 + j * l.rot_dims + c;
  l.slices.push_back({"root_pos", 0, 3});
  for (Eigen::Index i = 0; i < j; ++i)
    l.slices.push_back({"rot" + std::to_string(i), 3 + i * l.rot_dims,
                        3 + (i + 1) * l.rot_dims});
  if (c > 0) l.slices.push_back({"contacts", 3 + j * l.rot_dims, l.features});
  l.validate();
  return l;
}

FeatureLayout FeatureLayout::ganimator(const Skeleton& skeleton) {
  FeatureLayout l = ganimator_generic(skeleton.rotating_joint_count(),
                                      static_cast<Eigen::Index>(skeleton.contact_joints.size()));
  // Name rotation slices after their joints so masks can address them.
  Eigen::Index slot = 0;
  for (const auto& j : skeleton.joints) {
    if (j.is_end_site) continue;
    l.slices[static_cast<std::size_t>(1 + slot)].name = "rot:" + j.name;
    ++slot;
  }
  return l;
}

FeatureLayout FeatureLayout::humanml3d(Eigen::Index j) {
  FeatureLayout l;
  l.kind = LayoutKind::HumanML3D;
  l.joints = j;
  l.rot_dims = 6;
  l.contacts = 4;
  l.features = 4 + 3 * j + 3 * j + 6 * j + 4;
  Eigen::Index at = 0;
  auto push = [&](const std::string& name, Eigen::Index n) {
    l.slices.push_back({name, at, at + n});
    at += n;
  };
  push("root_ang_vel", 1);
  push("root_lin_vel", 2);
  push("root_height", 1);
  push("joint_pos", 3 * j);
  push("joint_vel", 3 * j);
  push("joint_rot", 6 * j);
  push("contacts", 4);
  l.validate();
  return l;
}

bool FeatureLayout::has_slice(const std::string& name) const {
  for (const auto& s : slices)
    if (s.name == name) return true;
  return false;
}

const FeatureSlice& FeatureLayout::slice(const std::string& name) const {
  for (const auto& s : slices)
    if (s.name == name) return s;
  throw DataError("layout: no feature slice named '" + name + "'");
}

FeatureSlice FeatureLayout::joint_rotation_slice(Eigen::Index i) const {
  require(kind == LayoutKind::GanimatorStyle, "joint_rotation_slice: GanimatorStyle only");
  require(i >= 0 && i < joints, "joint_rotation_slice: joint index out of range");
  return slices[static_cast<std::size_t>(1 + i)];
}

FeatureSlice FeatureLayout::root_position_slice() const {
  require(kind == LayoutKind::GanimatorStyle, "root_position_slice: GanimatorStyle only");
  return slices.front();
}

FeatureSlice FeatureLayout::contact_slice() const {
  require(contacts > 0, "contact_slice: layout has no contact labels");
  return slices.back();
}

void FeatureLayout::validate() const {
  require(features > 0, "layout: empty feature vector");
  std::vector<FeatureSlice> sorted = slices;
  std::sort(sorted.begin(), sorted.end(),
            [](const FeatureSlice& a, const FeatureSlice& b) { return a.begin < b.begin; });
  Eigen::Index at = 0;
  for (const auto& s : sorted) {
    require(s.begin == at, "layout: slices must be disjoint and cover [0,F); gap before '" +
                               s.name + "'");
    require(s.end > s.begin, "layout: empty slice '" + s.name + "'");
    at = s.end;
  }
  require(at == features, "layout: slices cover " + std::to_string(at) + " of " +
                              std::to_string(features) + " features");
}

void MotionSequence::validate() const {
  require(dynamics.ndim() == 2, "motion: dynamics must be NxF");
  require(frames() >= 1, "motion: needs at least one frame");
  require(dynamics.dim(1) == layout.features,
          "motion: dynamics width " + std::to_string(dynamics.dim(1)) +
              " does not match layout F " + std::to_string(layout.features));
  skeleton.validate();
  layout.validate();
  require(fps > 0, "motion: fps must be positive");
  if (layout.contacts > 0) {
    const auto cs = layout.contact_slice();
    for (Eigen::Index n = 0; n < frames(); ++n)
      for (Eigen::Index c = cs.begin; c < cs.end; ++c) {
        const float v = dynamics.data()[n * layout.features + c];
        require(v >= 0.0f && v <= 1.0f, "motion: contact label outside [0,1] at frame " +
                                            std::to_string(n));
      }
  }
}

FeatureStats compute_feature_stats(const Tensor<float>& dynamics) {
  require(dynamics.ndim() == 2, "feature stats: dynamics must be NxF");
  const Eigen::Index n = dynamics.dim(0), f = dynamics.dim(1);
  FeatureStats st;
  st.mean.resize(f);
  st.stddev.resize(f);
  for (Eigen::Index c = 0; c < f; ++c) {
    double s = 0, s2 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = dynamics.data()[i * f + c];
      s += v;
      s2 += v * v;
    }
    const double m = s / static_cast<double>(n);
    const double var = std::max(0.0, s2 / static_cast<double>(n) - m * m);
    st.mean[c] = static_cast<float>(m);
    st.stddev[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  return st;
}

Tensor<float> apply_normalize(const Tensor<float>& dynamics, const FeatureStats& stats) {
  const Eigen::Index n = dynamics.dim(0), f = dynamics.dim(1);
  require(stats.mean.size() == f, "normalize: stats width mismatch");
  Tensor<float> out({n, f});
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < f; ++c)
      out.data()[i * f + c] = (dynamics.data()[i * f + c] - stats.mean[c]) / stats.stddev[c];
  return out;
}

Tensor<float> apply_denormalize(const Tensor<float>& dynamics, const FeatureStats& stats) {
  const Eigen::Index n = dynamics.dim(0), f = dynamics.dim(1);
  require(stats.mean.size() == f, "denormalize: stats width mismatch");
  Tensor<float> out({n, f});
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < f; ++c)
      out.data()[i * f + c] = dynamics.data()[i * f + c] * stats.stddev[c] + stats.mean[c];
  return out;
}

std::pair<MotionSequence, FeatureStats> normalize(const MotionSequence& motion) {
  FeatureStats st = compute_feature_stats(motion.dynamics);
  MotionSequence out = motion;
  out.dynamics = apply_normalize(motion.dynamics, st);
  return {out, st};
}

MotionSequence denormalize(const MotionSequence& motion, const FeatureStats& stats) {
  MotionSequence out = motion;
  out.dynamics = apply_denormalize(motion.dynamics, stats);
  return out;
}

}  // namespace motif
