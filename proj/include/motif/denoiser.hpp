#pragma once

// The clean-motion predictor: a shallow temporal UNet whose attention is QnA
// local attention, built so one output frame depends on a bounded span of
// input frames. Structure per resolution level:
//
//   in_proj (k=1 conv)
//   down level l:  num_res_blocks x ResBlock, QnA      (avg-pool between levels)
//   middle:        ResBlock, QnA, ResBlock             (deepest resolution)
//   up level l:    fuse(concat skip, k=1), num_res_blocks x ResBlock, QnA
//                                                      (linear upsample between levels)
//   out_proj (k=1 conv, zero-initialized)
//
// ResBlock: conv -> group_norm with scale/shift from the timestep embedding
// -> silu -> dropout -> conv, plus identity skip. There is no positional
// embedding anywhere; locality comes from kernels and windows alone.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "motif/ops.hpp"
#include "motif/qna.hpp"
#include "motif/tensor.hpp"

namespace motif {

struct DenoiserConfig {
  int num_channels = 256;
  int channel_mult = 1;
  int num_res_blocks = 1;
  int kernel_size = 3;
  int depth = 1;  // resolution levels
  int qna_window = 31;
  int qna_heads = 4;
  int qna_head_dim = 32;
  double dropout = 0.5;
  bool use_scale_shift_norm = true;
  int norm_groups = 8;
  std::string padding_mode = "zeros";

  int time_embed_dim() const { return 4 * num_channels; }

  void validate() const {
    if (channel_mult != 1)
      throw ConfigError("denoiser: channel_mult " + std::to_string(channel_mult) +
                        " unsupported; channel width is constant (channel_mult 1)");
    if (depth < 1) throw ConfigError("denoiser: depth must be >= 1");
    if (num_res_blocks < 1) throw ConfigError("denoiser: num_res_blocks must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ConfigError("denoiser: kernel_size must be odd");
    if (qna_window < 1 || qna_window % 2 == 0)
      throw ConfigError("denoiser: qna_window must be odd");
    if (num_channels < 2 || num_channels % 2 != 0)
      throw ConfigError("denoiser: num_channels must be even");
    if (qna_heads < 1 || qna_head_dim < 1 ||
        num_channels % (qna_heads * qna_head_dim) != 0)
      throw ConfigError("denoiser: heads*head_dim must divide the channel width");
    if (norm_groups < 1 || num_channels % norm_groups != 0)
      throw ConfigError("denoiser: norm_groups must divide num_channels");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("denoiser: dropout must lie in [0,1)");
    if (padding_mode != "zeros")
      throw ConfigError("denoiser: padding_mode '" + padding_mode + "' unsupported");
  }
};

inline bool operator==(const DenoiserConfig& a, const DenoiserConfig& b) {
  return a.num_channels == b.num_channels && a.channel_mult == b.channel_mult &&
         a.num_res_blocks == b.num_res_blocks && a.kernel_size == b.kernel_size &&
         a.depth == b.depth && a.qna_window == b.qna_window &&
         a.qna_heads == b.qna_heads && a.qna_head_dim == b.qna_head_dim &&
         a.dropout == b.dropout && a.use_scale_shift_norm == b.use_scale_shift_norm &&
         a.norm_groups == b.norm_groups && a.padding_mode == b.padding_mode;
}

namespace detail {

// Every tensor the denoiser owns, in a fixed order shared by the optimizer
// and the checkpoint format. fan_in 0 marks zero-initialized tensors,
// fan_in -1 the learned queries.
struct ParamSpec {
  std::string name;
  Shape shape;
  Eigen::Index fan_in;
};

inline std::vector<ParamSpec> denoiser_param_specs(const DenoiserConfig& cfg,
                                                   Eigen::Index feature_dim) {
  cfg.validate();
  require(feature_dim >= 1, "denoiser: feature dimension must be >= 1");
  const Eigen::Index c = cfg.num_channels;
  const Eigen::Index e = cfg.time_embed_dim();
  const Eigen::Index k = cfg.kernel_size;
  const Eigen::Index hd = cfg.qna_heads * cfg.qna_head_dim;
  std::vector<ParamSpec> out;

  auto push = [&](const std::string& name, Shape shape, Eigen::Index fan_in) {
    out.push_back({name, std::move(shape), fan_in});
  };
  auto res_block = [&](const std::string& p) {
    push(p + ".conv1.w", {c, c, k}, c * k);
    push(p + ".conv1.b", {c}, c * k);
    const Eigen::Index emb_out = cfg.use_scale_shift_norm ? 2 * c : c;
    push(p + ".emb.w", {emb_out, e}, e);
    push(p + ".emb.b", {emb_out}, e);
    push(p + ".conv2.w", {c, c, k}, c * k);
    push(p + ".conv2.b", {c}, c * k);
  };
  auto qna_layer = [&](const std::string& p) {
    push(p + ".q", {cfg.qna_heads, cfg.qna_head_dim}, -1);
    push(p + ".wk", {hd, c}, c);
    push(p + ".bk", {hd}, c);
    push(p + ".wv", {hd, c}, c);
    push(p + ".bv", {hd}, c);
    push(p + ".wo", {c, hd}, hd);
    push(p + ".bo", {c}, hd);
  };
  auto stage = [&](const std::string& p) {
    for (int r = 0; r < cfg.num_res_blocks; ++r) res_block(p + ".res" + std::to_string(r));
    qna_layer(p + ".qna");
  };

  push("time.mlp1.w", {e, c}, c);
  push("time.mlp1.b", {e}, c);
  push("time.mlp2.w", {e, e}, e);
  push("time.mlp2.b", {e}, e);
  push("in_proj.w", {c, feature_dim, 1}, feature_dim);
  push("in_proj.b", {c}, feature_dim);
  for (int l = 0; l < cfg.depth; ++l) stage("down" + std::to_string(l));
  res_block("mid.res0");
  qna_layer("mid.qna");
  res_block("mid.res1");
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::string p = "up" + std::to_string(l);
    push(p + ".fuse.w", {c, 2 * c, 1}, 2 * c);
    push(p + ".fuse.b", {c}, 2 * c);
    stage(p);
  }
  push("out_proj.w", {feature_dim, c, 1}, 0);
  push("out_proj.b", {feature_dim}, 0);
  return out;
}

}  // namespace detail

template <typename Scalar>
struct DenoiserParams {
  DenoiserConfig config;
  Eigen::Index feature_dim = 0;
  std::vector<std::pair<std::string, Tensor<Scalar>>> named;  // fixed order

  const Tensor<Scalar>& at(const std::string& name) const {
    for (const auto& [n, t] : named)
      if (n == name) return t;
    throw DataError("denoiser params: no tensor named '" + name + "'");
  }
  Tensor<Scalar>& at(const std::string& name) {
    for (auto& [n, t] : named)
      if (n == name) return t;
    throw DataError("denoiser params: no tensor named '" + name + "'");
  }

  long parameter_count() const {
    long n = 0;
    for (const auto& [name, t] : named) n += static_cast<long>(t.numel());
    return n;
  }
  void zero_grad() {
    for (auto& [name, t] : named) t.zero_grad();
  }
  void set_requires_grad(bool b) {
    for (auto& [name, t] : named) t.set_requires_grad(b);
  }

  // Zero-filled inventory (checkpoint loading, shape validation).
  static DenoiserParams zeros(const DenoiserConfig& cfg, Eigen::Index feature_dim) {
    DenoiserParams p;
    p.config = cfg;
    p.feature_dim = feature_dim;
    for (auto& spec : detail::denoiser_param_specs(cfg, feature_dim))
      p.named.emplace_back(spec.name, Tensor<Scalar>::zeros(spec.shape));
    return p;
  }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init. The output projection is
  // zero-initialized by default so an untrained model predicts exactly zero;
  // disable for gradient probes that need every path live.
  static DenoiserParams init(const DenoiserConfig& cfg, Eigen::Index feature_dim,
                             RngStream& rng, bool zero_init_output = true) {
    DenoiserParams p;
    p.config = cfg;
    p.feature_dim = feature_dim;
    for (auto& spec : detail::denoiser_param_specs(cfg, feature_dim)) {
      Scalar bound;
      if (spec.fan_in > 0)
        bound = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(spec.fan_in)));
      else if (spec.fan_in < 0)
        bound = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(cfg.qna_head_dim)));
      else
        bound = zero_init_output ? Scalar(0)
                                 : static_cast<Scalar>(
                                       1.0 / std::sqrt(static_cast<double>(cfg.num_channels)));
      p.named.emplace_back(
          spec.name, bound == Scalar(0)
                         ? Tensor<Scalar>::zeros(spec.shape)
                         : Tensor<Scalar>::uniform(spec.shape, rng, -bound, bound));
    }
    p.set_requires_grad(true);
    return p;
  }
};

// Sinusoidal timestep features (batch x dim), dim even; constant w.r.t. the
// input so it never records on the tape.
template <typename Scalar>
Tensor<Scalar> timestep_embedding(const std::vector<int>& t, Eigen::Index dim) {
  const Eigen::Index b = static_cast<Eigen::Index>(t.size());
  const Eigen::Index half = dim / 2;
  Tensor<Scalar> out({b, dim});
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < half; ++j) {
      const double freq =
          std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
      const double arg = static_cast<double>(t[static_cast<std::size_t>(i)]) * freq;
      out.data()[i * dim + j] = static_cast<Scalar>(std::cos(arg));
      out.data()[i * dim + half + j] = static_cast<Scalar>(std::sin(arg));
    }
  }
  return out;
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> denoiser_res_block(const DenoiserParams<Scalar>& p, const std::string& prefix,
                                  const Tensor<Scalar>& h, const Tensor<Scalar>& emb,
                                  bool training, RngStream* rng) {
  const auto& cfg = p.config;
  Tensor<Scalar> v = conv1d(h, p.at(prefix + ".conv1.w"), p.at(prefix + ".conv1.b"));
  const Eigen::Index c = cfg.num_channels;
  if (cfg.use_scale_shift_norm) {
    Tensor<Scalar> ss = linear(emb, p.at(prefix + ".emb.w"), p.at(prefix + ".emb.b"));
    Tensor<Scalar> sc = slice(ss, 1, 0, c);
    Tensor<Scalar> sh = slice(ss, 1, c, c);
    v = group_norm_scale_shift(v, cfg.norm_groups, sc, sh);
  } else {
    Tensor<Scalar> zero({h.dim(0), c});
    v = group_norm_scale_shift(v, cfg.norm_groups, zero, zero);
    Tensor<Scalar> eb = linear(emb, p.at(prefix + ".emb.w"), p.at(prefix + ".emb.b"));
    v = add_channel_bias(v, eb);
  }
  v = silu(v);
  if (training && cfg.dropout > 0.0) {
    require(rng != nullptr, "denoiser: training forward needs a dropout RNG");
    v = dropout(v, cfg.dropout, true, *rng);
  }
  v = conv1d(v, p.at(prefix + ".conv2.w"), p.at(prefix + ".conv2.b"));
  return add(h, v);
}

template <typename Scalar>
Tensor<Scalar> denoiser_qna_layer(const DenoiserParams<Scalar>& p, const std::string& prefix,
                                  const Tensor<Scalar>& h) {
  Tensor<Scalar> ht = transpose12(h);
  Tensor<Scalar> a = qna_attention(ht, p.at(prefix + ".q"), p.at(prefix + ".wk"),
                                   p.at(prefix + ".bk"), p.at(prefix + ".wv"),
                                   p.at(prefix + ".bv"), p.at(prefix + ".wo"),
                                   p.at(prefix + ".bo"), p.config.qna_window);
  return add(h, transpose12(a));
}

template <typename Scalar>
Tensor<Scalar> denoiser_stage(const DenoiserParams<Scalar>& p, const std::string& prefix,
                              Tensor<Scalar> h, const Tensor<Scalar>& emb, bool training,
                              RngStream* rng) {
  for (int r = 0; r < p.config.num_res_blocks; ++r)
    h = denoiser_res_block(p, prefix + ".res" + std::to_string(r), h, emb, training, rng);
  return denoiser_qna_layer(p, prefix + ".qna", h);
}

}  // namespace detail

// x_t: (B, N, F), t: per-element timestep. Returns the clean-motion estimate
// with the same shape. N must be divisible by 2^(depth-1) and >= 2^depth.
template <typename Scalar>
Tensor<Scalar> denoise(const DenoiserParams<Scalar>& p, const Tensor<Scalar>& x_t,
                       const std::vector<int>& t, bool training = false,
                       RngStream* dropout_rng = nullptr) {
  const auto& cfg = p.config;
  cfg.validate();
  require(x_t.ndim() == 3, "denoise: input must be (B,N,F), got " + shape_str(x_t.shape()));
  const Eigen::Index b = x_t.dim(0), n = x_t.dim(1), f = x_t.dim(2);
  require(f == p.feature_dim, "denoise: feature dimension " + std::to_string(f) +
                                  " does not match the model's " +
                                  std::to_string(p.feature_dim));
  require(static_cast<Eigen::Index>(t.size()) == b,
          "denoise: timestep count does not match the batch");
  const Eigen::Index align = Eigen::Index(1) << (cfg.depth - 1);
  require(n % align == 0 && n >= (Eigen::Index(1) << cfg.depth),
          "denoise: temporal length " + std::to_string(n) +
              " not divisible for pooling at depth " + std::to_string(cfg.depth));

  Tensor<Scalar> emb = timestep_embedding<Scalar>(t, cfg.num_channels);
  emb = linear(emb, p.at("time.mlp1.w"), p.at("time.mlp1.b"));
  emb = silu(emb);
  emb = linear(emb, p.at("time.mlp2.w"), p.at("time.mlp2.b"));

  Tensor<Scalar> h = transpose12(x_t);  // (B, F, N)
  h = conv1d(h, p.at("in_proj.w"), p.at("in_proj.b"));

  std::vector<Tensor<Scalar>> skips;
  for (int l = 0; l < cfg.depth; ++l) {
    h = detail::denoiser_stage(p, "down" + std::to_string(l), h, emb, training, dropout_rng);
    skips.push_back(h);
    if (l < cfg.depth - 1) h = avg_pool2(h);
  }

  h = detail::denoiser_res_block(p, "mid.res0", h, emb, training, dropout_rng);
  h = detail::denoiser_qna_layer(p, "mid.qna", h);
  h = detail::denoiser_res_block(p, "mid.res1", h, emb, training, dropout_rng);

  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::string prefix = "up" + std::to_string(l);
    h = concat<Scalar>({h, skips[static_cast<std::size_t>(l)]}, 1);
    h = conv1d(h, p.at(prefix + ".fuse.w"), p.at(prefix + ".fuse.b"));
    h = detail::denoiser_stage(p, prefix, h, emb, training, dropout_rng);
    if (l > 0) h = upsample_linear2(h);
  }

  h = conv1d(h, p.at("out_proj.w"), p.at("out_proj.b"));
  return transpose12(h);
}

// ---------------------------------------------------------------------------
// Analytic receptive field, by propagating index intervals backward through
// the exact layer sequence of denoise(). Intervals widen through convs and
// QnA windows, rescale through pooling/upsampling, and the skip branch of
// every fuse re-enters the down path at its own level. The result is the
// maximal input-frame span influencing one interior output frame (maximized
// over the 2^(depth-1) resampling phases).

namespace detail {

struct IndexInterval {
  long lo, hi;
};

inline long floor_div2(long v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

inline IndexInterval widen(IndexInterval iv, long r) { return {iv.lo - r, iv.hi + r}; }
// through avg_pool2 (coarse -> fine)
inline IndexInterval pool_back(IndexInterval iv) { return {2 * iv.lo, 2 * iv.hi + 1}; }
// through upsample_linear2 (fine -> coarse)
inline IndexInterval ups_back(IndexInterval iv) {
  return {floor_div2(iv.lo), floor_div2(iv.hi + 1)};
}

inline long rf_span_for_output(const DenoiserConfig& cfg, long j) {
  const long conv_r = (cfg.kernel_size - 1) / 2;
  const long res_r = 2 * conv_r;  // two convs per res block
  const long qna_r = (cfg.qna_window - 1) / 2;
  const long stage_r = cfg.num_res_blocks * res_r + qna_r;

  std::vector<IndexInterval> entries;  // intervals entering the down path
  std::vector<int> entry_level;
  IndexInterval iv{j, j};  // out_proj is k=1
  for (int l = 0; l < cfg.depth; ++l) {
    iv = widen(iv, stage_r);  // up stage l (fuse conv is k=1)
    entries.push_back(iv);    // skip branch joins down-stage-l output
    entry_level.push_back(l);
    if (l < cfg.depth - 1) iv = ups_back(iv);
  }
  iv = widen(iv, res_r + qna_r + res_r);  // middle
  entries.push_back(iv);                  // main branch joins the deepest stage output
  entry_level.push_back(cfg.depth - 1);

  long lo = entries[0].lo, hi = entries[0].hi;
  bool first = true;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    IndexInterval s = entries[e];
    for (int l = entry_level[e]; l >= 0; --l) {
      s = widen(s, stage_r);  // down stage l (in_proj is k=1)
      if (l > 0) s = pool_back(s);
    }
    if (first) {
      lo = s.lo;
      hi = s.hi;
      first = false;
    } else {
      lo = std::min(lo, s.lo);
      hi = std::max(hi, s.hi);
    }
  }
  return hi - lo + 1;
}

}  // namespace detail

// Receptive field in input frames of one interior output frame.
inline long receptive_field(const DenoiserConfig& cfg) {
  cfg.validate();
  const long phases = 1L << (cfg.depth - 1);
  long best = 0;
  for (long j = 0; j < phases; ++j)
    best = std::max(best, detail::rf_span_for_output(cfg, j));
  return best;
}

}  // namespace motif
