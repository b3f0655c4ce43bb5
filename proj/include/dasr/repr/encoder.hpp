#pragma once

#include <string>
#include <vector>

#include "dasr/core/rng.hpp"
#include "dasr/tensor/params.hpp"
#include "dasr/tensor/tape.hpp"

namespace dasr {

/// Six-layer convolutional degradation encoder followed by global average
/// pooling, plus a two-layer MLP projection head. The pooled D-vector R is
/// what conditions the SR network; the projected unit vector x is what the
/// contrastive loss sees.
struct EncoderConfig {
  std::vector<int> widths{64, 64, 128, 128, 256};  // conv1..conv5 output channels
  int dim = 256;                                   // conv6 output = representation D
  int proj_dim = 128;                              // projection output P
  std::vector<int> strides{1, 2, 1, 2, 1, 1};
  double slope = 0.1;

  static EncoderConfig desk() {
    EncoderConfig c;
    c.widths = {16, 16, 16, 16, 16};
    c.dim = 64;
    c.proj_dim = 32;
    return c;
  }

  static EncoderConfig paper() { return EncoderConfig{}; }

  void validate() const {
    if (widths.size() != 5 || strides.size() != 6)
      throw ParamError("EncoderConfig: need 5 hidden widths and 6 strides");
    if (dim < 8) throw ParamError("EncoderConfig: representation dim must be >= 8");
    for (int w : widths)
      if (w < 1) throw ParamError("EncoderConfig: widths must be positive");
  }

  std::vector<int> layer_channels() const {
    std::vector<int> out = widths;
    out.push_back(dim);
    return out;
  }
};

/// Convolutional trunk size; the projection head is used only by the
/// contrastive objective and can be excluded when reporting inference
/// capacity.
inline int64_t encoder_param_count(const EncoderConfig& cfg, bool include_projection = false) {
  cfg.validate();
  const std::vector<int> chans = cfg.layer_channels();
  int64_t total = 0;
  int in_ch = 3;
  for (int l = 0; l < 6; ++l) {
    total += static_cast<int64_t>(chans[l]) * in_ch * 9 + chans[l];
    in_ch = chans[l];
  }
  if (include_projection)
    total += static_cast<int64_t>(cfg.dim) * cfg.dim + cfg.dim +
             static_cast<int64_t>(cfg.proj_dim) * cfg.dim + cfg.proj_dim;
  return total;
}

inline void init_encoder_params(ParamStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::vector<int> chans = cfg.layer_channels();
  int in_ch = 3;
  for (int l = 0; l < 6; ++l) {
    const int out_ch = chans[l];
    const std::string base = "conv" + std::to_string(l + 1);
    store.create(base + ".w", {out_ch, in_ch, 3, 3}, in_ch * 9, rng);
    store.create(base + ".b", {out_ch}, in_ch * 9, rng);
    in_ch = out_ch;
  }
  store.create("proj.fc1.w", {cfg.dim, cfg.dim}, cfg.dim, rng);
  store.create("proj.fc1.b", {cfg.dim}, cfg.dim, rng);
  store.create("proj.fc2.w", {cfg.proj_dim, cfg.dim}, cfg.dim, rng);
  store.create("proj.fc2.b", {cfg.proj_dim}, cfg.dim, rng);
}

/// Patches [N,3,H,W] -> representations [N,D]. Convolutions use reflect
/// padding so that a constant patch maps to the same R at any spatial size;
/// pooling then removes the spatial extent entirely.
inline Tape::Id encode(BoundParams& p, Tape::Id patch, const EncoderConfig& cfg) {
  const Tensor& in = p.tape().val(patch);
  if (in.rank() != 4 || in.dim(1) != 3) throw DimensionError("encode: need [N,3,H,W]");
  if (in.dim(2) < 8 || in.dim(3) < 8)
    throw DimensionError("encode: patch smaller than the 8x8 receptive-field minimum");
  Tape& t = p.tape();
  Tape::Id h = patch;
  for (int l = 0; l < 6; ++l) {
    const std::string base = "conv" + std::to_string(l + 1);
    h = t.conv2d(h, p(base + ".w"), p(base + ".b"), cfg.strides[l], Padding::Reflect);
    h = t.leaky_relu(h, cfg.slope);
  }
  return t.global_avg_pool(h);
}

/// R [N,D] -> unit-norm projection x [N,P].
inline Tape::Id project(BoundParams& p, Tape::Id r, const EncoderConfig& cfg) {
  Tape& t = p.tape();
  Tape::Id h = t.dense(r, p("proj.fc1.w"), p("proj.fc1.b"));
  h = t.leaky_relu(h, cfg.slope);
  h = t.dense(h, p("proj.fc2.w"), p("proj.fc2.b"));
  return t.l2_normalize(h);
}

}  // namespace dasr
