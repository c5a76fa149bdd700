#include "doctest.h"

#include <cmath>

#include "motif/applications.hpp"
#include "test_util.hpp"

using motif::FrameRange;
using motif::MotionSequence;
using motif::Tensor;
using motif::TrainedModel;

namespace {

// Untrained random-weight model over the bundled biped features: the
// application contracts (pinning, degenerate hooks, determinism) hold for
// any denoiser.
TrainedModel tiny_model(std::uint64_t seed = 21, int depth = 1) {
  motif::DenoiserConfig cfg;
  cfg.num_channels = 8;
  cfg.qna_window = 5;
  cfg.qna_heads = 2;
  cfg.qna_head_dim = 4;
  cfg.dropout = 0.0;
  cfg.norm_groups = 2;
  cfg.depth = depth;

  auto walk = motif::make_synthetic_walk(48);
  TrainedModel m;
  motif::RngStream rng(seed);
  m.params = motif::DenoiserParams<float>::init(cfg, walk.layout.features, rng, false);
  m.stats = motif::compute_feature_stats(walk.dynamics);
  m.skeleton = walk.skeleton;
  m.layout = walk.layout;
  m.fps = walk.fps;
  m.schedule = motif::make_cosine_schedule(25);
  return m;
}

double mean_frame_l2(const MotionSequence& a, const MotionSequence& b, Eigen::Index lo,
                     Eigen::Index hi) {
  const Eigen::Index f = a.layout.features;
  double acc = 0;
  for (Eigen::Index n = lo; n < hi; ++n) {
    double d2 = 0;
    for (Eigen::Index c = 0; c < f; ++c) {
      const double d = a.dynamics.data()[n * f + c] - b.dynamics.data()[n * f + c];
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(hi - lo);
}

}  // namespace

TEST_CASE("build_mask: no keeps is all-ones, keep-everything with no ramp is all-zeros") {
  auto walk = motif::make_synthetic_walk(24);
  auto all_synth = motif::build_mask(24, walk.layout, {}, {}, 5);
  CHECK(all_synth.weights.minCoeff() == 1.0f);
  auto all_keep = motif::build_mask(24, walk.layout, {{0, 24}}, {}, 0);
  CHECK(all_keep.weights.maxCoeff() == 0.0f);
}

TEST_CASE("build_mask: keep [0,50) of 100 with ramp 10 matches the direct construction") {
  auto walk = motif::make_synthetic_walk(10);
  auto mask = motif::build_mask(100, walk.layout, {{0, 50}}, {}, 10);
  // directly constructed oracle: 0 on [0,40), (i+1)/11 on [40,50), 1 on [50,100)
  for (Eigen::Index n = 0; n < 100; ++n) {
    float expect;
    if (n < 40)
      expect = 0.0f;
    else if (n < 50)
      expect = static_cast<float>(n - 40 + 1) / 11.0f;
    else
      expect = 1.0f;
    for (Eigen::Index f = 0; f < walk.layout.features; ++f)
      CHECK(mask.weights(n, f) == doctest::Approx(expect).epsilon(1e-6));
  }
  // linear within the ramp
  for (Eigen::Index n = 41; n < 49; ++n)
    CHECK(mask.weights(n + 1, 0) - mask.weights(n, 0) ==
          doctest::Approx(mask.weights(n, 0) - mask.weights(n - 1, 0)));
}

TEST_CASE("build_mask: spatial keeps zero their slices; bad input rejected") {
  auto walk = motif::make_synthetic_walk(10);
  auto mask = motif::build_mask(10, walk.layout, {}, {"rot:LeftHip", "root_pos"}, 0);
  const auto rot = walk.layout.slice("rot:LeftHip");
  for (Eigen::Index n = 0; n < 10; ++n) {
    for (Eigen::Index f = 0; f < 3; ++f) CHECK(mask.weights(n, f) == 0.0f);
    for (Eigen::Index f = rot.begin; f < rot.end; ++f) CHECK(mask.weights(n, f) == 0.0f);
    CHECK(mask.weights(n, walk.layout.slice("rot:Head").begin) == 1.0f);
  }
  CHECK_THROWS_AS(motif::build_mask(10, walk.layout, {{2, 6}, {5, 8}}, {}, 0),
                  motif::DataError);
  CHECK_THROWS_AS(motif::build_mask(10, walk.layout, {{0, 12}}, {}, 0), motif::DataError);
  CHECK_THROWS_AS(motif::build_mask(10, walk.layout, {}, {"rot:NoSuchJoint"}, 0),
                  motif::DataError);
}

TEST_CASE("compose: an all-zero mask reproduces the reference") {
  auto model = tiny_model();
  auto reference = motif::make_synthetic_walk(48);
  auto mask = motif::build_mask(48, model.layout, {{0, 48}}, {}, 0);
  auto out = motif::compose(model, reference, mask, 5);
  CHECK(mean_frame_l2(out, reference, 0, 48) < 1e-2);
}

TEST_CASE("compose: an all-one mask is bitwise identical to plain sampling") {
  auto model = tiny_model();
  auto reference = motif::make_synthetic_walk(48);
  auto mask = motif::build_mask(48, model.layout, {}, {}, 15);
  auto composed = motif::compose(model, reference, mask, 9);
  auto plain = motif::sample_motion(model, 48, 9);
  CHECK(testutil::bitwise_equal(composed.dynamics, plain.dynamics));
}

TEST_CASE("compose: kept frames pin to the reference while the rest is synthesized") {
  auto model = tiny_model();
  auto reference = motif::make_synthetic_walk(48);
  auto mask = motif::build_mask(48, model.layout, {{0, 16}}, {}, 0);
  auto out = motif::compose(model, reference, mask, 10);
  const double kept = mean_frame_l2(out, reference, 0, 16);
  const double synth = mean_frame_l2(out, reference, 16, 48);
  CHECK(kept < 1e-2);
  CHECK(synth > 10.0 * std::max(kept, 1e-6));
  // reproducible bitwise
  auto again = motif::compose(model, reference, mask, 10);
  CHECK(testutil::bitwise_equal(out.dynamics, again.dynamics));
}

TEST_CASE("harmonize: filter factor 1 reproduces the content motion") {
  auto model = tiny_model();
  motif::HarmonizationSpec spec;
  spec.reference = motif::make_synthetic_walk(48);
  spec.filter_factor = 1;
  auto out = motif::harmonize(model, spec, 11);
  // normalize/denormalize float round trip is the only error source
  CHECK(mean_frame_l2(out, spec.reference, 0, 48) < 1e-4);
}

TEST_CASE("harmonize: zero-filter test mode is bitwise plain sampling") {
  auto model = tiny_model();
  motif::HarmonizationSpec spec;
  spec.reference = motif::make_synthetic_walk(48);
  spec.filter_factor = 2;
  spec.zero_filter = true;
  auto out = motif::harmonize(model, spec, 12);
  auto plain = motif::sample_motion(model, 48, 12);
  CHECK(testutil::bitwise_equal(out.dynamics, plain.dynamics));
}

TEST_CASE("harmonize: keeps the low band of the content but changes the rest") {
  auto model = tiny_model();
  motif::HarmonizationSpec spec;
  spec.reference = motif::make_synthetic_walk(48);
  spec.filter_factor = 2;
  auto out = motif::harmonize(model, spec, 13);

  const Eigen::Index f = model.layout.features;
  const auto out_norm = motif::apply_normalize(out.dynamics, model.stats);
  const auto ref_norm = motif::apply_normalize(spec.reference.dynamics, model.stats);
  motif::CMapMat<float> om(out_norm.data(), 48, f);
  motif::CMapMat<float> rm(ref_norm.data(), 48, f);
  const auto low_out = motif::lowpass_resample(om, 2);
  const auto low_ref = motif::lowpass_resample(rm, 2);
  const double low_rel = (low_out - low_ref).norm() / low_ref.norm();
  CHECK(low_rel < 0.10);

  // unlike composition, the injected content itself is altered
  const motif::MatRM<float> high_out = om - low_out;
  const motif::MatRM<float> high_ref = rm - low_ref;
  CHECK((high_out - high_ref).norm() / std::max(1e-6, (double)high_ref.norm()) > 0.10);
}

TEST_CASE("generate_long: arbitrary lengths come back exact and finite") {
  auto model = tiny_model(22, /*depth=*/2);
  for (Eigen::Index n : {37, 48, 128}) {
    auto out = motif::generate_long(model, n, 14);
    CHECK(out.frames() == n);
    CHECK(out.dynamics.values().isFinite().all());
  }
}

TEST_CASE("generate_crowd: derived seeds, pairwise distinct, count 1 equals sample") {
  auto model = tiny_model();
  auto crowd = motif::generate_crowd(model, 48, 4, 77);
  REQUIRE(crowd.size() == 4);
  for (std::size_t i = 0; i < crowd.size(); ++i)
    for (std::size_t j = i + 1; j < crowd.size(); ++j)
      CHECK(mean_frame_l2(crowd[i], crowd[j], 0, 48) > 0.0);

  auto one = motif::generate_crowd(model, 48, 1, 77);
  auto direct = motif::sample_motion(model, 48, motif::derive_seed(77, 0));
  CHECK(testutil::bitwise_equal(one[0].dynamics, direct.dynamics));
}

TEST_CASE("generate_crowd: mean pairwise distance is stable across base seeds") {
  auto model = tiny_model();
  std::vector<double> means;
  for (std::uint64_t base : {101u, 202u, 303u}) {
    auto crowd = motif::generate_crowd(model, 48, 4, base);
    double acc = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < crowd.size(); ++i)
      for (std::size_t j = i + 1; j < crowd.size(); ++j) {
        acc += mean_frame_l2(crowd[i], crowd[j], 0, 48);
        ++pairs;
      }
    means.push_back(acc / pairs);
  }
  const double avg = (means[0] + means[1] + means[2]) / 3.0;
  for (double m : means) CHECK(std::abs(m - avg) / avg < 0.20);
}
