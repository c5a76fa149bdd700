#pragma once

// Self-describing checkpoint container: an 8-byte magic, a JSON header
// (format version, model config, normalization statistics, skeleton, layout,
// parameter directory, optional trainer state), then one raw little-endian
// float32 blob. Loading rebuilds the parameter inventory from the stored
// config and rejects any mismatch in names, order, or shapes.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "motif/denoiser.hpp"
#include "motif/skeleton.hpp"
#include "motif/trainer.hpp"

namespace motif {

struct TrainerSnapshot {
  long next_step = 1;                  // first step still to run (1-based)
  long adam_steps = 0;
  std::vector<ArrX<float>> adam_m;     // aligned with the parameter order
  std::vector<ArrX<float>> adam_v;
  std::string rng_state;
};

struct Checkpoint {
  DenoiserConfig config;
  DenoiserParams<float> params;
  FeatureStats stats;
  Skeleton skeleton;
  LayoutKind layout_kind = LayoutKind::GanimatorStyle;
  Eigen::Index layout_joints = 0;
  double fps = 30.0;
  int diffusion_steps = 1000;
  std::string noise_schedule = "cosine";
  std::optional<TrainerSnapshot> trainer;

  FeatureLayout layout() const {
    return layout_kind == LayoutKind::GanimatorStyle ? FeatureLayout::ganimator(skeleton)
                                                     : FeatureLayout::humanml3d(layout_joints);
  }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

inline TrainerSnapshot snapshot_trainer(const TrainerState& st) {
  TrainerSnapshot snap;
  snap.next_step = st.next_step;
  snap.adam_steps = st.adam.steps;
  snap.adam_m = st.adam.m;
  snap.adam_v = st.adam.v;
  snap.rng_state = st.rng.save_state();
  return snap;
}

inline TrainerState restore_trainer(const Checkpoint& ckpt) {
  require(ckpt.trainer.has_value(), "checkpoint: no trainer state to resume from");
  TrainerState st;
  st.params = ckpt.params;
  st.adam.m = ckpt.trainer->adam_m;
  st.adam.v = ckpt.trainer->adam_v;
  st.adam.steps = ckpt.trainer->adam_steps;
  st.rng.load_state(ckpt.trainer->rng_state);
  st.next_step = ckpt.trainer->next_step;
  return st;
}

nlohmann::json config_to_json(const DenoiserConfig& cfg);
DenoiserConfig config_from_json(const nlohmann::json& j);
nlohmann::json skeleton_to_json(const Skeleton& s);
Skeleton skeleton_from_json(const nlohmann::json& j);

}  // namespace motif
