#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "dasr/core/rng.hpp"
#include "dasr/degradation/kernel.hpp"
#include "dasr/tensor/params.hpp"
#include "dasr/tensor/tape.hpp"

namespace dasr {

/// Table-style ablation variants.
///   Model1: full architecture, no contrastive objective (trained by L1 only).
///   Model2: conditioning by stretch-and-concatenate instead of DA conv.
///   Model3: DA conv without the channel modulation branch.
///   Model4: full DA conv (kernel prediction + channel modulation).
///   Model5: representation from the true degradation (non-blind bound).
enum class AblationModel { Model1 = 1, Model2, Model3, Model4, Model5 };

inline const char* ablation_name(AblationModel m) {
  switch (m) {
    case AblationModel::Model1: return "model1";
    case AblationModel::Model2: return "model2";
    case AblationModel::Model3: return "model3";
    case AblationModel::Model4: return "model4";
    case AblationModel::Model5: return "model5";
  }
  return "model?";
}

inline AblationModel ablation_from_name(const std::string& s) {
  for (AblationModel m : {AblationModel::Model1, AblationModel::Model2, AblationModel::Model3,
                          AblationModel::Model4, AblationModel::Model5})
    if (s == ablation_name(m)) return m;
  throw ParamError("unknown ablation id: " + s);
}

struct DasrConfig {
  int channels = 64;
  int groups = 5;
  int blocks = 5;
  int branch_hidden = 64;  // hidden width of the kernel/modulation branches
  int scale = 4;
  int rep_dim = 256;  // dimension of the incoming representation R
  AblationModel variant = AblationModel::Model4;
  int concat_dim = 16;  // Model2: channels of the stretched representation
  double slope = 0.1;

  static DasrConfig desk() {
    DasrConfig c;
    c.channels = 16;
    c.groups = 2;
    c.blocks = 2;
    c.branch_hidden = 32;
    c.rep_dim = 64;
    c.concat_dim = 8;
    return c;
  }

  static DasrConfig paper() { return DasrConfig{}; }

  void validate() const {
    if (groups < 1 || blocks < 1) throw ParamError("DasrConfig: groups and blocks must be >= 1");
    if (channels < 1 || branch_hidden < 1 || concat_dim < 1)
      throw ParamError("DasrConfig: widths must be positive");
    if (scale < 1 || scale > 4) throw ParamError("DasrConfig: scale must be in {1,2,3,4}");
    if (rep_dim < 1) throw ParamError("DasrConfig: rep_dim must be positive");
  }

  /// Pixel-shuffle stage factors for this scale.
  std::vector<int> upsample_factors() const {
    switch (scale) {
      case 1: return {};
      case 2: return {2};
      case 3: return {3};
      default: return {2, 2};
    }
  }
};

/// Enumerates every parameter of the network in creation order. Both
/// initialization and parameter counting walk this single definition.
inline void for_each_dasr_param(
    const DasrConfig& cfg,
    const std::function<void(const std::string&, std::vector<int>, int)>& fn) {
  cfg.validate();
  const int c = cfg.channels;
  fn("head.w", {c, 3, 3, 3}, 27);
  fn("head.b", {c}, 27);
  auto da_conv_params = [&](const std::string& prefix) {
    if (cfg.variant == AblationModel::Model2) {
      fn(prefix + ".cmp.w", {cfg.concat_dim, cfg.rep_dim}, cfg.rep_dim);
      fn(prefix + ".cmp.b", {cfg.concat_dim}, cfg.rep_dim);
      fn(prefix + ".cv.w", {c, c + cfg.concat_dim, 3, 3}, (c + cfg.concat_dim) * 9);
      fn(prefix + ".cv.b", {c}, (c + cfg.concat_dim) * 9);
      return;
    }
    fn(prefix + ".kb.fc1.w", {cfg.branch_hidden, cfg.rep_dim}, cfg.rep_dim);
    fn(prefix + ".kb.fc1.b", {cfg.branch_hidden}, cfg.rep_dim);
    fn(prefix + ".kb.fc2.w", {c * 9, cfg.branch_hidden}, cfg.branch_hidden);
    fn(prefix + ".kb.fc2.b", {c * 9}, cfg.branch_hidden);
    fn(prefix + ".pw.w", {c, c, 1, 1}, c);
    fn(prefix + ".pw.b", {c}, c);
    if (cfg.variant != AblationModel::Model3) {
      fn(prefix + ".mb.fc1.w", {cfg.branch_hidden, cfg.rep_dim}, cfg.rep_dim);
      fn(prefix + ".mb.fc1.b", {cfg.branch_hidden}, cfg.rep_dim);
      fn(prefix + ".mb.fc2.w", {c, cfg.branch_hidden}, cfg.branch_hidden);
      fn(prefix + ".mb.fc2.b", {c}, cfg.branch_hidden);
    }
  };
  for (int g = 0; g < cfg.groups; ++g) {
    const std::string gp = "g" + std::to_string(g);
    for (int b = 0; b < cfg.blocks; ++b) {
      const std::string bp = gp + ".b" + std::to_string(b);
      da_conv_params(bp + ".dc1");
      da_conv_params(bp + ".dc2");
    }
    fn(gp + ".tail.w", {c, c, 3, 3}, c * 9);
    fn(gp + ".tail.b", {c}, c * 9);
  }
  fn("body_tail.w", {c, c, 3, 3}, c * 9);
  fn("body_tail.b", {c}, c * 9);
  int up = 0;
  for (int f : cfg.upsample_factors()) {
    const std::string upn = "up" + std::to_string(up++);
    fn(upn + ".w", {c * f * f, c, 3, 3}, c * 9);
    fn(upn + ".b", {c * f * f}, c * 9);
  }
  fn("tail.w", {3, c, 3, 3}, c * 9);
  fn("tail.b", {3}, c * 9);
}

inline void init_dasr_params(ParamStore& store, const DasrConfig& cfg, Rng& rng) {
  for_each_dasr_param(cfg, [&](const std::string& name, std::vector<int> shape, int fan_in) {
    store.create(name, std::move(shape), fan_in, rng);
  });
}

inline int64_t dasr_param_count(const DasrConfig& cfg) {
  int64_t total = 0;
  for_each_dasr_param(cfg, [&](const std::string&, std::vector<int> shape, int) {
    total += Tensor::numel_of(shape);
  });
  return total;
}

/// Widens a Model2/Model3 variant of `base` until its parameter count is as
/// close as possible to the full model's, per the comparable-size protocol.
inline DasrConfig match_capacity(const DasrConfig& base, AblationModel variant) {
  DasrConfig target = base;
  target.variant = AblationModel::Model4;
  const int64_t want = dasr_param_count(target);
  DasrConfig cand = base;
  cand.variant = variant;
  if (variant != AblationModel::Model2 && variant != AblationModel::Model3) return cand;
  DasrConfig best = cand;
  int64_t best_err = std::abs(dasr_param_count(cand) - want);
  for (int c = base.channels; c <= base.channels * 2; ++c) {
    cand.channels = c;
    if (variant == AblationModel::Model2) {
      for (int dc = 2; dc <= std::max(4, base.rep_dim); dc += 2) {
        cand.concat_dim = dc;
        const int64_t err = std::abs(dasr_param_count(cand) - want);
        if (err < best_err) {
          best_err = err;
          best = cand;
        }
      }
    } else {
      for (int h = 4; h <= base.branch_hidden * 4; h += 2) {
        cand.branch_hidden = h;
        const int64_t err = std::abs(dasr_param_count(cand) - want);
        if (err < best_err) {
          best_err = err;
          best = cand;
        }
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Forward graph
// ---------------------------------------------------------------------------

/// Kernel branch: R [1,D] -> depthwise weights [C,1,3,3]. The predicted
/// weights are used raw, with no normalization.
inline Tape::Id predict_kernel(BoundParams& p, Tape::Id rep, const DasrConfig& cfg,
                               const std::string& prefix) {
  Tape& t = p.tape();
  Tape::Id h = t.dense(rep, p(prefix + ".kb.fc1.w"), p(prefix + ".kb.fc1.b"));
  h = t.leaky_relu(h, cfg.slope);
  h = t.dense(h, p(prefix + ".kb.fc2.w"), p(prefix + ".kb.fc2.b"));
  return t.reshape(h, {cfg.channels, 1, 3, 3});
}

/// Modulation branch: R [1,D] -> per-channel coefficients in (0,1), [1,C].
inline Tape::Id predict_modulation(BoundParams& p, Tape::Id rep, const DasrConfig& cfg,
                                   const std::string& prefix) {
  Tape& t = p.tape();
  Tape::Id h = t.dense(rep, p(prefix + ".mb.fc1.w"), p(prefix + ".mb.fc1.b"));
  h = t.leaky_relu(h, cfg.slope);
  h = t.dense(h, p(prefix + ".mb.fc2.w"), p(prefix + ".mb.fc2.b"));
  return t.sigmoid(h);
}

/// Degradation-aware convolution. F1 = 1x1 conv of the depthwise convolution
/// of F with the predicted kernel; F2 = channel-wise rescale of F by the
/// predicted modulation; output F1 + F2. Model2 swaps all of this for
/// stretch-and-concatenate conditioning; Model3 drops the F2 term.
inline Tape::Id da_conv(BoundParams& p, Tape::Id feat, Tape::Id rep, const DasrConfig& cfg,
                        const std::string& prefix) {
  Tape& t = p.tape();
  const int n = t.val(feat).dim(0);
  if (cfg.variant == AblationModel::Model2) {
    Tape::Id c = t.dense(rep, p(prefix + ".cmp.w"), p(prefix + ".cmp.b"));
    c = t.leaky_relu(c, cfg.slope);
    if (n > 1) c = t.tile_rows(c, n);
    const Tape::Id maps = t.broadcast_spatial(c, t.val(feat).dim(2), t.val(feat).dim(3));
    const Tape::Id cat = t.concat_channels(feat, maps);
    return t.conv2d(cat, p(prefix + ".cv.w"), p(prefix + ".cv.b"), 1);
  }
  const Tape::Id w = predict_kernel(p, rep, cfg, prefix);
  const Tape::Id f1 =
      t.conv2d(t.depthwise_conv2d(feat, w), p(prefix + ".pw.w"), p(prefix + ".pw.b"), 1);
  if (cfg.variant == AblationModel::Model3) return f1;
  const Tape::Id v = predict_modulation(p, rep, cfg, prefix);
  const Tape::Id f2 = t.channel_scale(feat, v);
  return t.add(f1, f2);
}

/// Two DA convolutions with an activation between them and an identity skip
/// from the block input.
inline Tape::Id da_block(BoundParams& p, Tape::Id feat, Tape::Id rep, const DasrConfig& cfg,
                         const std::string& prefix) {
  Tape& t = p.tape();
  Tape::Id h = da_conv(p, feat, rep, cfg, prefix + ".dc1");
  h = t.leaky_relu(h, cfg.slope);
  h = da_conv(p, h, rep, cfg, prefix + ".dc2");
  return t.add(h, feat);
}

/// Full SR network: head conv, residual groups of DA blocks (each group
/// closed by a conv and a group skip), a long skip from the head, sub-pixel
/// upsampling, tail conv. lr is [N,3,H,W]; rep is one representation [1,D]
/// shared by the whole batch. Output is [N,3,sH,sW].
inline Tape::Id dasr_forward(BoundParams& p, Tape::Id lr, Tape::Id rep, const DasrConfig& cfg) {
  cfg.validate();
  Tape& t = p.tape();
  const Tensor& in = t.val(lr);
  if (in.rank() != 4 || in.dim(1) != 3) throw DimensionError("dasr_forward: need [N,3,H,W]");
  const Tensor& r = t.val(rep);
  if (r.rank() != 2 || r.dim(0) != 1 || r.dim(1) != cfg.rep_dim)
    throw DimensionError("dasr_forward: representation must be [1," +
                         std::to_string(cfg.rep_dim) + "]");
  const Tape::Id head = t.conv2d(lr, p("head.w"), p("head.b"), 1);
  Tape::Id h = head;
  for (int g = 0; g < cfg.groups; ++g) {
    const std::string gp = "g" + std::to_string(g);
    const Tape::Id group_in = h;
    for (int b = 0; b < cfg.blocks; ++b)
      h = da_block(p, h, rep, cfg, gp + ".b" + std::to_string(b));
    h = t.conv2d(h, p(gp + ".tail.w"), p(gp + ".tail.b"), 1);
    h = t.add(h, group_in);
  }
  h = t.conv2d(h, p("body_tail.w"), p("body_tail.b"), 1);
  h = t.add(h, head);
  int up = 0;
  for (int f : cfg.upsample_factors()) {
    const std::string upn = "up" + std::to_string(up++);
    h = t.conv2d(h, p(upn + ".w"), p(upn + ".b"), 1);
    h = t.pixel_shuffle(h, f);
  }
  return t.conv2d(h, p("tail.w"), p("tail.b"), 1);
}

/// L1 reconstruction loss.
inline Tape::Id sr_loss(Tape& t, Tape::Id sr, Tape::Id hr) { return t.mean_abs(sr, hr); }

// ---------------------------------------------------------------------------
// Oracle representation (Model 5)
// ---------------------------------------------------------------------------

struct OracleConfig {
  int kernel_size = 21;
  int rep_dim = 256;
  double slope = 0.1;

  int input_dim() const { return kernel_size * kernel_size + 1; }
};

inline void init_oracle_params(ParamStore& store, const OracleConfig& cfg, Rng& rng) {
  int in = cfg.input_dim();
  for (int l = 1; l <= 5; ++l) {
    const std::string base = "oracle.fc" + std::to_string(l);
    store.create(base + ".w", {cfg.rep_dim, in}, in, rng);
    store.create(base + ".b", {cfg.rep_dim}, in, rng);
    in = cfg.rep_dim;
  }
}

/// Input features of the oracle branch: the flattened true blur kernel plus
/// the noise level rescaled to O(1).
inline Tensor oracle_input(const DegradationSpec& spec, const OracleConfig& cfg) {
  const BlurKernel k = build_kernel(spec.kernel);
  if (k.size != cfg.kernel_size)
    throw DimensionError("oracle_input: kernel size mismatch");
  Tensor in({1, cfg.input_dim()});
  for (size_t i = 0; i < k.weights.size(); ++i) in[static_cast<int64_t>(i)] = k.weights[i];
  in[cfg.input_dim() - 1] = spec.noise_level / 25.0;
  return in;
}

/// Five dense layers from the true degradation to a representation [1,D].
inline Tape::Id oracle_representation(BoundParams& p, const DegradationSpec& spec,
                                      const OracleConfig& cfg) {
  Tape& t = p.tape();
  Tape::Id h = t.leaf(oracle_input(spec, cfg), false);
  for (int l = 1; l <= 5; ++l) {
    const std::string base = "oracle.fc" + std::to_string(l);
    h = t.dense(h, p(base + ".w"), p(base + ".b"));
    if (l < 5) h = t.leaky_relu(h, cfg.slope);
  }
  return h;
}

}  // namespace dasr
