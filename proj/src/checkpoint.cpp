#include "motif/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace motif {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'O', 'T', 'I', 'F', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

}  // namespace

json config_to_json(const DenoiserConfig& cfg) {
  return json{{"num_channels", cfg.num_channels},
              {"channel_mult", cfg.channel_mult},
              {"num_res_blocks", cfg.num_res_blocks},
              {"kernel_size", cfg.kernel_size},
              {"depth", cfg.depth},
              {"qna_window", cfg.qna_window},
              {"num_heads", cfg.qna_heads},
              {"head_dim", cfg.qna_head_dim},
              {"dropout", cfg.dropout},
              {"use_scale_shift_norm", cfg.use_scale_shift_norm},
              {"norm_groups", cfg.norm_groups},
              {"padding_mode", cfg.padding_mode}};
}

DenoiserConfig config_from_json(const json& j) {
  DenoiserConfig cfg;
  cfg.num_channels = j.at("num_channels").get<int>();
  cfg.channel_mult = j.at("channel_mult").get<int>();
  cfg.num_res_blocks = j.at("num_res_blocks").get<int>();
  cfg.kernel_size = j.at("kernel_size").get<int>();
  cfg.depth = j.at("depth").get<int>();
  cfg.qna_window = j.at("qna_window").get<int>();
  cfg.qna_heads = j.at("num_heads").get<int>();
  cfg.qna_head_dim = j.at("head_dim").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.use_scale_shift_norm = j.at("use_scale_shift_norm").get<bool>();
  cfg.norm_groups = j.at("norm_groups").get<int>();
  cfg.padding_mode = j.at("padding_mode").get<std::string>();
  cfg.validate();
  return cfg;
}

json skeleton_to_json(const Skeleton& s) {
  json joints = json::array();
  for (const auto& j : s.joints)
    joints.push_back(json{{"name", j.name},
                          {"parent", j.parent},
                          {"offset", {j.offset[0], j.offset[1], j.offset[2]}},
                          {"end_site", j.is_end_site},
                          {"rotation_order", j.rotation_order}});
  return json{{"units", s.units}, {"contact_joints", s.contact_joints}, {"joints", joints}};
}

Skeleton skeleton_from_json(const json& j) {
  Skeleton s;
  s.units = j.at("units").get<double>();
  s.contact_joints = j.at("contact_joints").get<std::vector<int>>();
  for (const auto& jj : j.at("joints")) {
    Joint joint;
    joint.name = jj.at("name").get<std::string>();
    joint.parent = jj.at("parent").get<int>();
    for (int e = 0; e < 3; ++e) joint.offset[e] = jj.at("offset")[static_cast<std::size_t>(e)].get<double>();
    joint.is_end_site = jj.at("end_site").get<bool>();
    joint.rotation_order = jj.at("rotation_order").get<std::string>();
    s.joints.push_back(joint);
  }
  s.validate();
  return s;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json meta;
  meta["format_version"] = kFormatVersion;
  meta["model"] = config_to_json(ckpt.config);
  meta["feature_dim"] = ckpt.params.feature_dim;
  meta["fps"] = ckpt.fps;
  meta["diffusion_steps"] = ckpt.diffusion_steps;
  meta["noise_schedule"] = ckpt.noise_schedule;
  meta["layout"] = json{
      {"kind", ckpt.layout_kind == LayoutKind::GanimatorStyle ? "ganimator" : "humanml3d"},
      {"joints", ckpt.layout_joints}};
  meta["skeleton"] = skeleton_to_json(ckpt.skeleton);
  meta["normalization"] =
      json{{"mean", std::vector<float>(ckpt.stats.mean.data(),
                                       ckpt.stats.mean.data() + ckpt.stats.mean.size())},
           {"std", std::vector<float>(ckpt.stats.stddev.data(),
                                      ckpt.stats.stddev.data() + ckpt.stats.stddev.size())}};

  std::uint64_t offset = 0;
  json dir = json::array();
  for (const auto& [name, t] : ckpt.params.named) {
    dir.push_back(json{{"name", name},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"count", static_cast<std::uint64_t>(t.numel())}});
    offset += static_cast<std::uint64_t>(t.numel());
  }
  meta["params"] = dir;

  if (ckpt.trainer) {
    meta["trainer"] = json{{"next_step", ckpt.trainer->next_step},
                           {"adam_steps", ckpt.trainer->adam_steps},
                           {"rng_state", ckpt.trainer->rng_state},
                           {"adam_offset", offset}};
    for (const auto& m : ckpt.trainer->adam_m) offset += static_cast<std::uint64_t>(m.size());
    for (const auto& v : ckpt.trainer->adam_v) offset += static_cast<std::uint64_t>(v.size());
  }

  const std::string header = meta.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "checkpoint: cannot write '" + path + "'");
  out.write(kMagic, 8);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : ckpt.params.named)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (ckpt.trainer) {
    for (const auto& m : ckpt.trainer->adam_m)
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(float)));
    for (const auto& v : ckpt.trainer->adam_v)
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  require(out.good(), "checkpoint: failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kMagic, 8) == 0,
          "checkpoint: '" + path + "' is not a checkpoint file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  require(in.good(), "checkpoint: truncated header in '" + path + "'");

  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception& e) {
    throw DataError("checkpoint: bad header in '" + path + "': " + e.what());
  }
  require(meta.at("format_version").get<int>() == kFormatVersion,
          "checkpoint: unsupported format version in '" + path + "'");

  Checkpoint ckpt;
  ckpt.config = config_from_json(meta.at("model"));
  const auto feature_dim = meta.at("feature_dim").get<Eigen::Index>();
  ckpt.fps = meta.at("fps").get<double>();
  ckpt.diffusion_steps = meta.at("diffusion_steps").get<int>();
  ckpt.noise_schedule = meta.at("noise_schedule").get<std::string>();
  ckpt.layout_kind = meta.at("layout").at("kind").get<std::string>() == "ganimator"
                         ? LayoutKind::GanimatorStyle
                         : LayoutKind::HumanML3D;
  ckpt.layout_joints = meta.at("layout").at("joints").get<Eigen::Index>();
  ckpt.skeleton = skeleton_from_json(meta.at("skeleton"));

  const auto mean = meta.at("normalization").at("mean").get<std::vector<float>>();
  const auto stdv = meta.at("normalization").at("std").get<std::vector<float>>();
  require(mean.size() == stdv.size() &&
              static_cast<Eigen::Index>(mean.size()) == feature_dim,
          "checkpoint: normalization statistics width mismatch");
  ckpt.stats.mean = Eigen::Map<const Eigen::VectorXf>(mean.data(),
                                                      static_cast<Eigen::Index>(mean.size()));
  ckpt.stats.stddev = Eigen::Map<const Eigen::VectorXf>(
      stdv.data(), static_cast<Eigen::Index>(stdv.size()));

  // Rebuild the inventory from the config; the stored directory must match.
  ckpt.params = DenoiserParams<float>::zeros(ckpt.config, feature_dim);
  const auto& dir = meta.at("params");
  require(dir.size() == ckpt.params.named.size(),
          "checkpoint: parameter directory size does not match the config");
  for (std::size_t i = 0; i < ckpt.params.named.size(); ++i) {
    auto& [name, tensor] = ckpt.params.named[i];
    const auto& entry = dir[i];
    require(entry.at("name").get<std::string>() == name,
            "checkpoint: parameter order mismatch at '" + name + "'");
    const auto shape = entry.at("shape").get<Shape>();
    require(shape == tensor.shape(), "checkpoint: shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
  require(in.good(), "checkpoint: truncated parameter data in '" + path + "'");
  ckpt.params.set_requires_grad(true);

  if (meta.contains("trainer")) {
    TrainerSnapshot ts;
    ts.next_step = meta.at("trainer").at("next_step").get<long>();
    ts.adam_steps = meta.at("trainer").at("adam_steps").get<long>();
    ts.rng_state = meta.at("trainer").at("rng_state").get<std::string>();
    for (const auto& [name, t] : ckpt.params.named) {
      ts.adam_m.emplace_back(t.numel());
      in.read(reinterpret_cast<char*>(ts.adam_m.back().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    for (const auto& [name, t] : ckpt.params.named) {
      ts.adam_v.emplace_back(t.numel());
      in.read(reinterpret_cast<char*>(ts.adam_v.back().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    require(in.good(), "checkpoint: truncated trainer state in '" + path + "'");
    ckpt.trainer = std::move(ts);
  }
  return ckpt;
}

}  // namespace motif
