#pragma once

// Motion representation: a fixed skeleton (static features), a per-frame
// feature layout, and the dynamic feature tensor being learned/generated.

#include <Eigen/Core>
#include <string>
#include <vector>

#include "motif/common.hpp"
#include "motif/tensor.hpp"

namespace motif {

struct Joint {
  std::string name;
  int parent = -1;  // -1 for the root
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  bool is_end_site = false;
  // Axis order of the joint's rotation channels ("ZYX" etc.); empty for end
  // sites. Preserved from source files so exports keep the original order.
  std::string rotation_order;
};

struct Skeleton {
  std::vector<Joint> joints;          // topological order: parent index < child index
  std::vector<int> contact_joints;    // indices of joints prone to ground contact
  double units = 1.0;                 // meters per skeleton unit

  int joint_count() const { return static_cast<int>(joints.size()); }
  // Joints that carry rotation features (everything but end sites).
  int rotating_joint_count() const {
    int n = 0;
    for (const auto& j : joints)
      if (!j.is_end_site) ++n;
    return n;
  }
  int index_of(const std::string& name) const {
    for (int i = 0; i < joint_count(); ++i)
      if (joints[static_cast<std::size_t>(i)].name == name) return i;
    return -1;
  }
  void validate() const;
};

enum class LayoutKind { GanimatorStyle, HumanML3D };

struct FeatureSlice {
  std::string name;
  Eigen::Index begin = 0;
  Eigen::Index end = 0;  // half-open
  Eigen::Index size() const { return end - begin; }
};

// Maps each per-frame feature group to an index range. GanimatorStyle packs
// F = 3 + J*Q + C (root position, per-joint 6D rotations, contact labels);
// HumanML3D packs F = 4 + 3J + 3J + 6J + 4 (root angular velocity, planar
// root velocity, root height, joint positions/velocities/rotations, foot
// contacts) and is supported as a pure data layout.
struct FeatureLayout {
  LayoutKind kind = LayoutKind::GanimatorStyle;
  Eigen::Index joints = 0;     // J
  Eigen::Index rot_dims = 6;   // Q
  Eigen::Index contacts = 0;   // C
  Eigen::Index features = 0;   // F
  std::vector<FeatureSlice> slices;

  static FeatureLayout ganimator(const Skeleton& skeleton);
  static FeatureLayout ganimator_generic(Eigen::Index j, Eigen::Index c);
  static FeatureLayout humanml3d(Eigen::Index j);

  bool has_slice(const std::string& name) const;
  const FeatureSlice& slice(const std::string& name) const;
  // Rotation slice of the i-th rotating joint (GanimatorStyle).
  FeatureSlice joint_rotation_slice(Eigen::Index i) const;
  FeatureSlice root_position_slice() const;
  FeatureSlice contact_slice() const;
  void validate() const;
};

struct MotionSequence {
  Tensor<float> dynamics;  // N x F
  FeatureLayout layout;
  Skeleton skeleton;
  double fps = 30.0;

  Eigen::Index frames() const { return dynamics.dim(0); }
  void validate() const;
};

struct ContactLabels {
  MatRM<float> labels;  // N x C, binary
  double threshold = 0.0;
};

// N x J x 3 global joint positions for every joint, end sites included.
Tensor<float> forward_kinematics(const MotionSequence& motion);

// Contact label of (frame n, contact joint j) is 1 when the joint's FK
// velocity over the preceding frame stays below eps (skeleton units/frame).
// Frame 0 copies frame 1.
ContactLabels compute_contact_labels(const MotionSequence& motion, double eps);

// Per-frame displacement threshold corresponding to 0.006 m/frame at 30 fps.
double default_contact_threshold(const Skeleton& skeleton, double fps);

// Fills the contact-label slice of the motion from FK velocities.
void bake_contact_labels(MotionSequence& motion, double eps);

struct FeatureStats {
  Eigen::VectorXf mean;
  Eigen::VectorXf stddev;  // floored at 1e-6
};

FeatureStats compute_feature_stats(const Tensor<float>& dynamics);
Tensor<float> apply_normalize(const Tensor<float>& dynamics, const FeatureStats& stats);
Tensor<float> apply_denormalize(const Tensor<float>& dynamics, const FeatureStats& stats);
std::pair<MotionSequence, FeatureStats> normalize(const MotionSequence& motion);
MotionSequence denormalize(const MotionSequence& motion, const FeatureStats& stats);

// Procedural in-place walk bundled for tests and demos: phase-shifted
// sinusoidal joint rotations on an 8-joint biped, contact labels baked from
// FK velocities.
MotionSequence make_synthetic_walk(Eigen::Index frames = 300, double fps = 30.0);

}  // namespace motif
