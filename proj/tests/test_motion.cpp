#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "motif/bvh.hpp"
#include "motif/rotations.hpp"
#include "motif/skeleton.hpp"
#include "test_util.hpp"

using motif::MotionSequence;
using motif::Skeleton;
using motif::Tensor;
using motif::Vec6d;

namespace {

Skeleton chain_skeleton(int rotating_joints) {
  Skeleton s;
  for (int i = 0; i < rotating_joints; ++i) {
    motif::Joint j;
    j.name = "J" + std::to_string(i);
    j.parent = i - 1;
    j.offset = i == 0 ? Eigen::Vector3d(0, 0, 0) : Eigen::Vector3d(0.3 * i, 0.1, -0.2);
    j.rotation_order = "ZYX";
    s.joints.push_back(j);
  }
  return s;
}

MotionSequence chain_motion(const Skeleton& s, Eigen::Index frames, std::uint64_t seed) {
  MotionSequence m;
  m.skeleton = s;
  m.layout = motif::FeatureLayout::ganimator(s);
  m.fps = 30.0;
  m.dynamics = Tensor<float>({frames, m.layout.features});
  motif::RngStream rng(seed);
  for (Eigen::Index n = 0; n < frames; ++n) {
    float* row = m.dynamics.data() + n * m.layout.features;
    for (int e = 0; e < 3; ++e) row[e] = static_cast<float>(rng.normal());
    int slot = 0;
    for (const auto& j : s.joints) {
      if (j.is_end_site) continue;
      const Eigen::Vector3d angles(rng.normal(), rng.normal(), rng.normal());
      const Vec6d r6 = motif::matrix_to_6d(motif::euler_to_matrix(angles, "ZYX"));
      for (int e = 0; e < 6; ++e) row[3 + slot * 6 + e] = static_cast<float>(r6[e]);
      ++slot;
    }
  }
  return m;
}

void set_rotation(MotionSequence& m, Eigen::Index frame, int slot,
                  const Eigen::Matrix3d& rot) {
  const Vec6d r6 = motif::matrix_to_6d(rot);
  float* row = m.dynamics.data() + frame * m.layout.features;
  for (int e = 0; e < 6; ++e) row[3 + slot * 6 + e] = static_cast<float>(r6[e]);
}

}  // namespace

TEST_CASE("rotation_6d_to_matrix: canonical 6-vector gives the identity") {
  Vec6d r;
  r << 1, 0, 0, 0, 1, 0;
  CHECK((motif::rotation_6d_to_matrix(r) - Eigen::Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("rotation_6d_to_matrix: random inputs land in SO(3)") {
  motif::RngStream rng(11);
  for (int t = 0; t < 50; ++t) {
    Vec6d r;
    for (int i = 0; i < 6; ++i) r[i] = rng.normal();
    const Eigen::Matrix3d m = motif::rotation_6d_to_matrix(r);
    CHECK((m.transpose() * m - Eigen::Matrix3d::Identity()).norm() < 1e-6);
    CHECK(std::abs(m.determinant() - 1.0) < 1e-6);
    // first two columns already orthonormal -> exact round trip
    const Eigen::Matrix3d again = motif::rotation_6d_to_matrix(motif::matrix_to_6d(m));
    CHECK((again - m).norm() < 1e-6);
  }
}

TEST_CASE("rotation_6d_to_matrix: degenerate inputs are rejected") {
  Vec6d zero = Vec6d::Zero();
  CHECK_THROWS_AS(motif::rotation_6d_to_matrix(zero), motif::DataError);
  Vec6d parallel;
  parallel << 1, 0, 0, 2, 0, 0;
  CHECK_THROWS_AS(motif::rotation_6d_to_matrix(parallel), motif::DataError);
}

TEST_CASE("euler conversions: decomposition recomposes the matrix for all six orders") {
  const char* orders[] = {"XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"};
  motif::RngStream rng(12);
  for (const char* order : orders) {
    for (int t = 0; t < 40; ++t) {
      const Eigen::Vector3d angles(3.0 * rng.normal(), 3.0 * rng.normal(),
                                   3.0 * rng.normal());
      const Eigen::Matrix3d m = motif::euler_to_matrix(angles, order);
      const Eigen::Vector3d back = motif::matrix_to_euler(m, order);
      CHECK((motif::euler_to_matrix(back, order) - m).norm() < 1e-9);
    }
    // near gimbal lock the recomposition must still match
    const Eigen::Vector3d locked(0.4, EIGEN_PI / 2, -0.9);
    const Eigen::Matrix3d m = motif::euler_to_matrix(locked, order);
    const Eigen::Vector3d back = motif::matrix_to_euler(m, order);
    CHECK((motif::euler_to_matrix(back, order) - m).norm() < 1e-6);
  }
}

TEST_CASE("forward_kinematics: identity rotations place joints at summed offsets") {
  auto s = chain_skeleton(4);
  MotionSequence m = chain_motion(s, 1, 13);
  float* row = m.dynamics.data();
  for (int e = 0; e < 3; ++e) row[e] = 0.0f;
  for (int slot = 0; slot < 4; ++slot)
    set_rotation(m, 0, slot, Eigen::Matrix3d::Identity());
  const auto fk = forward_kinematics(m);
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int j = 0; j < 4; ++j) {
    acc += s.joints[static_cast<std::size_t>(j)].offset;
    for (int e = 0; e < 3; ++e)
      CHECK(fk.data()[j * 3 + e] == doctest::Approx(acc[e]).epsilon(1e-6));
  }
}

TEST_CASE("forward_kinematics: 90-degree yaw maps a +X offset to -Z") {
  Skeleton s;
  motif::Joint root;
  root.name = "Root";
  root.parent = -1;
  root.rotation_order = "ZYX";
  s.joints.push_back(root);
  motif::Joint child;
  child.name = "Child";
  child.parent = 0;
  child.offset = Eigen::Vector3d(1, 0, 0);
  child.rotation_order = "ZYX";
  s.joints.push_back(child);

  MotionSequence m;
  m.skeleton = s;
  m.layout = motif::FeatureLayout::ganimator(s);
  m.fps = 30;
  m.dynamics = Tensor<float>({1, m.layout.features});
  set_rotation(m, 0, 0, motif::axis_rotation(1, EIGEN_PI / 2));
  set_rotation(m, 0, 1, Eigen::Matrix3d::Identity());

  const auto fk = forward_kinematics(m);
  CHECK(fk.data()[3 + 0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(fk.data()[3 + 1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(fk.data()[3 + 2] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("forward_kinematics: agrees with a naive per-frame matrix-chain oracle") {
  auto s = chain_skeleton(3);
  MotionSequence m = chain_motion(s, 6, 14);
  const auto fk = forward_kinematics(m);
  for (Eigen::Index n = 0; n < 6; ++n) {
    const float* row = m.dynamics.data() + n * m.layout.features;
    // oracle: accumulate 4x4 transforms joint by joint
    Eigen::Matrix4d g = Eigen::Matrix4d::Identity();
    for (int j = 0; j < 3; ++j) {
      Vec6d r6;
      for (int e = 0; e < 6; ++e) r6[e] = row[3 + j * 6 + e];
      Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
      local.topLeftCorner<3, 3>() = motif::rotation_6d_to_matrix(r6);
      Eigen::Vector3d trans = s.joints[static_cast<std::size_t>(j)].offset;
      if (j == 0) trans += Eigen::Vector3d(row[0], row[1], row[2]);
      local.topRightCorner<3, 1>() = trans;
      g = g * local;
      for (int e = 0; e < 3; ++e)
        CHECK(std::abs(fk.data()[(n * 3 + j) * 3 + e] - g(e, 3)) < 1e-5);
    }
  }
}

TEST_CASE("forward_kinematics: invariant to joint storage order given fixed parent links") {
  // Swap the two sibling subtrees of the synthetic biped and permute the
  // feature columns accordingly; global positions per joint name must match.
  auto base = motif::make_synthetic_walk(40);
  const auto fk_base = forward_kinematics(base);

  std::vector<int> perm;  // new order -> old index
  for (int j = 0; j < base.skeleton.joint_count(); ++j) perm.push_back(j);
  // left leg block [5,6,7] and right leg block [8,9,10] swap places
  std::vector<int> reordered = {0, 1, 2, 3, 4, 8, 9, 10, 5, 6, 7};
  perm = reordered;
  std::vector<int> old_to_new(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    old_to_new[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);

  MotionSequence permuted;
  permuted.fps = base.fps;
  for (int nj = 0; nj < base.skeleton.joint_count(); ++nj) {
    motif::Joint j = base.skeleton.joints[static_cast<std::size_t>(perm[nj])];
    if (j.parent >= 0) j.parent = old_to_new[static_cast<std::size_t>(j.parent)];
    permuted.skeleton.joints.push_back(j);
  }
  for (int c : base.skeleton.contact_joints)
    permuted.skeleton.contact_joints.push_back(old_to_new[static_cast<std::size_t>(c)]);
  permuted.skeleton.validate();
  permuted.layout = motif::FeatureLayout::ganimator(permuted.skeleton);
  permuted.dynamics = Tensor<float>({base.frames(), permuted.layout.features});

  auto slot_of = [](const Skeleton& s, int joint) {
    int at = 0;
    for (int j = 0; j < joint; ++j)
      if (!s.joints[static_cast<std::size_t>(j)].is_end_site) ++at;
    return at;
  };
  for (Eigen::Index n = 0; n < base.frames(); ++n) {
    const float* src = base.dynamics.data() + n * base.layout.features;
    float* dst = permuted.dynamics.data() + n * permuted.layout.features;
    for (int e = 0; e < 3; ++e) dst[e] = src[e];
    for (int nj = 0; nj < base.skeleton.joint_count(); ++nj) {
      if (permuted.skeleton.joints[static_cast<std::size_t>(nj)].is_end_site) continue;
      const int oj = perm[static_cast<std::size_t>(nj)];
      const int ns = slot_of(permuted.skeleton, nj), os = slot_of(base.skeleton, oj);
      for (int e = 0; e < 6; ++e) dst[3 + ns * 6 + e] = src[3 + os * 6 + e];
    }
    const auto cs = base.layout.contact_slice();
    for (Eigen::Index e = 0; e < cs.size(); ++e)
      dst[permuted.layout.contact_slice().begin + e] = src[cs.begin + e];
  }

  const auto fk_perm = forward_kinematics(permuted);
  const int j_all = base.skeleton.joint_count();
  for (Eigen::Index n = 0; n < base.frames(); ++n)
    for (int nj = 0; nj < j_all; ++nj) {
      const int oj = perm[static_cast<std::size_t>(nj)];
      for (int e = 0; e < 3; ++e)
        CHECK(std::abs(fk_perm.data()[(n * j_all + nj) * 3 + e] -
                       fk_base.data()[(n * j_all + oj) * 3 + e]) < 1e-5);
    }
}

TEST_CASE("contact labels: static motion is all-contact, fast motion is no-contact") {
  auto s = chain_skeleton(3);
  s.contact_joints = {2};
  MotionSequence m = chain_motion(s, 5, 15);
  // static: copy frame 0 everywhere
  for (Eigen::Index n = 1; n < 5; ++n)
    for (Eigen::Index c = 0; c < m.layout.features; ++c)
      m.dynamics.data()[n * m.layout.features + c] = m.dynamics.data()[c];
  auto labels = compute_contact_labels(m, 0.01);
  for (Eigen::Index n = 0; n < 5; ++n) CHECK(labels.labels(n, 0) == 1.0f);

  // translating ten thresholds per frame: never in contact
  for (Eigen::Index n = 0; n < 5; ++n)
    m.dynamics.data()[n * m.layout.features + 0] = static_cast<float>(n) * 0.1f;
  labels = compute_contact_labels(m, 0.01);
  for (Eigen::Index n = 0; n < 5; ++n) CHECK(labels.labels(n, 0) == 0.0f);
}

TEST_CASE("contact labels: flips exactly where FK velocity crosses the threshold") {
  auto m = motif::make_synthetic_walk(120);
  const double eps = default_contact_threshold(m.skeleton, m.fps);
  const auto labels = compute_contact_labels(m, eps);
  const auto fk = forward_kinematics(m);
  const int j_all = m.skeleton.joint_count();
  bool saw_contact = false, saw_swing = false;
  for (Eigen::Index ci = 0; ci < 2; ++ci) {
    const int j = m.skeleton.contact_joints[static_cast<std::size_t>(ci)];
    for (Eigen::Index n = 1; n < m.frames(); ++n) {
      double d2 = 0;
      for (int e = 0; e < 3; ++e) {
        const double d = fk.data()[(n * j_all + j) * 3 + e] -
                         fk.data()[((n - 1) * j_all + j) * 3 + e];
        d2 += d * d;
      }
      const float expect = std::sqrt(d2) < eps ? 1.0f : 0.0f;
      CHECK(labels.labels(n, ci) == expect);
      saw_contact = saw_contact || expect == 1.0f;
      saw_swing = saw_swing || expect == 0.0f;
    }
  }
  CHECK(saw_contact);
  CHECK(saw_swing);
}

TEST_CASE("contact labels: invariant to a global translation of the motion") {
  auto m = motif::make_synthetic_walk(60);
  const double eps = default_contact_threshold(m.skeleton, m.fps);
  const auto base = compute_contact_labels(m, eps);
  for (Eigen::Index n = 0; n < m.frames(); ++n) {
    m.dynamics.data()[n * m.layout.features + 0] += 5.0f;
    m.dynamics.data()[n * m.layout.features + 2] -= 3.0f;
  }
  const auto moved = compute_contact_labels(m, eps);
  CHECK((base.labels - moved.labels).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("normalize: constant channels are floored and map to zero") {
  Tensor<float> d({4, 2});
  for (Eigen::Index n = 0; n < 4; ++n) {
    d.data()[n * 2 + 0] = 3.5f;
    d.data()[n * 2 + 1] = static_cast<float>(n);
  }
  const auto st = motif::compute_feature_stats(d);
  CHECK(st.stddev[0] == doctest::Approx(1e-6));
  const auto norm = motif::apply_normalize(d, st);
  for (Eigen::Index n = 0; n < 4; ++n) CHECK(norm.data()[n * 2 + 0] == 0.0f);
}

TEST_CASE("normalize: denormalize inverts within 1e-6 and matches a two-pass oracle") {
  motif::RngStream rng(16);
  Tensor<float> d = Tensor<float>::randn({50, 7}, rng, 2.0f);
  const auto st = motif::compute_feature_stats(d);

  // independent two-pass oracle
  for (Eigen::Index c = 0; c < 7; ++c) {
    double mean = 0;
    for (Eigen::Index n = 0; n < 50; ++n) mean += d.data()[n * 7 + c];
    mean /= 50.0;
    double var = 0;
    for (Eigen::Index n = 0; n < 50; ++n) {
      const double dd = d.data()[n * 7 + c] - mean;
      var += dd * dd;
    }
    var /= 50.0;
    CHECK(std::abs(st.mean[c] - mean) < 1e-7 * std::max(1.0, std::abs(mean)));
    CHECK(std::abs(st.stddev[c] - std::sqrt(var)) < 1e-7 * std::max(1.0, std::sqrt(var)));
  }

  const auto round = motif::apply_denormalize(motif::apply_normalize(d, st), st);
  CHECK(testutil::max_abs_diff(d, round) < 1e-6);
}

TEST_CASE("bvh: hand-written two-joint file with one zero frame") {
  const std::string text = R"(HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Chest
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
  }
}
MOTION
Frames: 1
Frame Time: 0.033333
0 0 0 0 0 0 0 0 0
)";
  const auto doc = motif::parse_bvh(text);
  CHECK(doc.skeleton.joint_count() == 2);
  CHECK(doc.frames.rows() == 1);
  CHECK(doc.frames.cwiseAbs().maxCoeff() == 0.0);
  CHECK(doc.fps == doctest::Approx(30.0));
  CHECK(doc.skeleton.joints[0].rotation_order == "ZXY");

  const auto m = motif::motion_from_bvh(doc);
  CHECK(m.frames() == 1);
  CHECK(m.layout.joints == 2);
  // identity rotations -> euler angles all zero on export
  const std::string out = write_bvh(m);
  const auto doc2 = motif::parse_bvh(out);
  CHECK(doc2.frames.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("bvh: round trip preserves frames, joints, fps and channel values") {
  auto m = motif::make_synthetic_walk(90);
  const std::string text = write_bvh(m);
  const auto doc = motif::parse_bvh(text);
  CHECK(doc.frames.rows() == m.frames());
  CHECK(doc.skeleton.joint_count() == m.skeleton.joint_count());
  CHECK(doc.fps == m.fps);

  auto m2 = motif::motion_from_bvh(doc, {"LeftFoot", "RightFoot"});
  REQUIRE(m2.layout.features == m.layout.features);
  // compare root position + rotation features; contact labels are re-baked
  const Eigen::Index rot_end = 3 + m.layout.joints * 6;
  for (Eigen::Index n = 0; n < m.frames(); ++n)
    for (Eigen::Index c = 0; c < rot_end; ++c)
      CHECK(std::abs(m2.dynamics.data()[n * m.layout.features + c] -
                     m.dynamics.data()[n * m.layout.features + c]) < 1e-4);

  // channel-level fixed point: writing the reparsed motion reproduces values
  const auto doc2 = motif::parse_bvh(write_bvh(m2));
  CHECK((doc2.frames - doc.frames).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("bvh: validation failures carry counts and line numbers") {
  const std::string bad_frames = R"(HIERARCHY
ROOT A
{
  OFFSET 0 0 0
  CHANNELS 3 Zrotation Xrotation Yrotation
}
MOTION
Frames: 3
Frame Time: 0.04
0 0 0
0 0 0
)";
  CHECK_THROWS_WITH_AS(motif::parse_bvh(bad_frames),
                       doctest::Contains("declared 3 frames but found 2"), motif::DataError);

  const std::string bad_channel = R"(HIERARCHY
ROOT A
{
  OFFSET 0 0 0
  CHANNELS 3 Zrotation Wrotation Yrotation
}
MOTION
Frames: 1
Frame Time: 0.04
0 0 0
)";
  CHECK_THROWS_WITH_AS(motif::parse_bvh(bad_channel),
                       doctest::Contains("line 5: unsupported channel name 'Wrotation'"),
                       motif::DataError);

  CHECK_THROWS_WITH_AS(motif::parse_bvh("MOTION"), doctest::Contains("HIERARCHY"),
                       motif::DataError);
}

TEST_CASE("bvh: non-finite features are rejected on export") {
  auto m = motif::make_synthetic_walk(10);
  m.dynamics.data()[7] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(write_bvh(m), motif::DataError);
}

TEST_CASE("synthetic walk: layout, size, and label sanity") {
  auto m = motif::make_synthetic_walk(300);
  CHECK(m.frames() == 300);
  CHECK(m.layout.features == 53);  // 3 + 8*6 + 2
  CHECK(m.layout.joints == 8);
  CHECK(m.skeleton.contact_joints.size() == 2);
  m.validate();
  const auto cs = m.layout.contact_slice();
  float lo = 1.0f, hi = 0.0f;
  for (Eigen::Index n = 0; n < 300; ++n)
    for (Eigen::Index c = cs.begin; c < cs.end; ++c) {
      const float v = m.dynamics.data()[n * 53 + c];
      CHECK((v == 0.0f || v == 1.0f));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  CHECK(lo == 0.0f);  // both states occur
  CHECK(hi == 1.0f);
}
