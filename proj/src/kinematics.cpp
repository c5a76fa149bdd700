#include <vector>

#include "motif/rotations.hpp"
#include "motif/skeleton.hpp"

namespace motif {

namespace {

// Rotation feature slot per joint: end sites carry no rotation features.
std::vector<int> rotation_slots(const Skeleton& skeleton) {
  std::vector<int> slot(skeleton.joints.size(), -1);
  int at = 0;
  for (std::size_t i = 0; i < skeleton.joints.size(); ++i)
    if (!skeleton.joints[i].is_end_site) slot[i] = at++;
  return slot;
}

}  // namespace

Tensor<float> forward_kinematics(const MotionSequence& motion) {
  require(motion.layout.kind == LayoutKind::GanimatorStyle,
          "forward_kinematics: GanimatorStyle layout required");
  motion.skeleton.validate();
  const Eigen::Index n_frames = motion.frames();
  const Eigen::Index f = motion.layout.features;
  const int j_all = motion.skeleton.joint_count();
  require(motion.layout.joints == motion.skeleton.rotating_joint_count(),
          "forward_kinematics: layout joint count does not match skeleton");

  const auto slot = rotation_slots(motion.skeleton);
  Tensor<float> out({n_frames, j_all, 3});

  std::vector<Eigen::Matrix3d> rot_g(static_cast<std::size_t>(j_all));
  std::vector<Eigen::Vector3d> pos_g(static_cast<std::size_t>(j_all));
  for (Eigen::Index nf = 0; nf < n_frames; ++nf) {
    const float* row = motion.dynamics.data() + nf * f;
    for (int j = 0; j < j_all; ++j) {
      const auto& joint = motion.skeleton.joints[static_cast<std::size_t>(j)];
      Eigen::Matrix3d local = Eigen::Matrix3d::Identity();
      if (!joint.is_end_site) {
        Vec6d r6;
        const Eigen::Index base = 3 + slot[static_cast<std::size_t>(j)] * 6;
        for (int e = 0; e < 6; ++e) r6[e] = row[base + e];
        local = rotation_6d_to_matrix(r6);
      }
      if (joint.parent < 0) {
        pos_g[static_cast<std::size_t>(j)] =
            joint.offset + Eigen::Vector3d(row[0], row[1], row[2]);
        rot_g[static_cast<std::size_t>(j)] = local;
      } else {
        const auto p = static_cast<std::size_t>(joint.parent);
        pos_g[static_cast<std::size_t>(j)] = pos_g[p] + rot_g[p] * joint.offset;
        rot_g[static_cast<std::size_t>(j)] = rot_g[p] * local;
      }
      for (int e = 0; e < 3; ++e)
        out.data()[(nf * j_all + j) * 3 + e] =
            static_cast<float>(pos_g[static_cast<std::size_t>(j)][e]);
    }
  }
  return out;
}

ContactLabels compute_contact_labels(const MotionSequence& motion, double eps) {
  const Eigen::Index c = static_cast<Eigen::Index>(motion.skeleton.contact_joints.size());
  require(c > 0, "contact labels: skeleton declares no contact joints");
  require(motion.frames() >= 2, "contact labels: needs at least two frames");
  const auto fk = forward_kinematics(motion);
  const Eigen::Index n = motion.frames();
  const int j_all = motion.skeleton.joint_count();

  ContactLabels out;
  out.threshold = eps;
  out.labels.resize(n, c);
  for (Eigen::Index ci = 0; ci < c; ++ci) {
    const int j = motion.skeleton.contact_joints[static_cast<std::size_t>(ci)];
    for (Eigen::Index nf = 1; nf < n; ++nf) {
      double d2 = 0;
      for (int e = 0; e < 3; ++e) {
        const double d = fk.data()[(nf * j_all + j) * 3 + e] -
                         fk.data()[((nf - 1) * j_all + j) * 3 + e];
        d2 += d * d;
      }
      out.labels(nf, ci) = std::sqrt(d2) < eps ? 1.0f : 0.0f;
    }
    out.labels(0, ci) = out.labels(1, ci);  // velocity undefined at frame 0
  }
  return out;
}

double default_contact_threshold(const Skeleton& skeleton, double fps) {
  // 0.18 m/s, expressed per frame in skeleton units.
  return 0.18 / (fps * skeleton.units);
}

void bake_contact_labels(MotionSequence& motion, double eps) {
  const auto labels = compute_contact_labels(motion, eps);
  const auto cs = motion.layout.contact_slice();
  for (Eigen::Index n = 0; n < motion.frames(); ++n)
    for (Eigen::Index ci = 0; ci < cs.size(); ++ci)
      motion.dynamics.data()[n * motion.layout.features + cs.begin + ci] =
          labels.labels(n, ci);
}

}  // namespace motif
