#pragma once

#include <cmath>
#include <vector>

#include "dasr/core/error.hpp"
#include "dasr/core/image.hpp"
#include "dasr/core/rng.hpp"
#include "dasr/degradation/kernel.hpp"

namespace dasr {

/// Full description of one synthetic degradation: blur kernel, integer scale
/// factor, additive white Gaussian noise level on the 0-255 convention.
struct DegradationSpec {
  KernelSpec kernel;
  int scale = 4;
  double noise_level = 0.0;

  void validate() const {
    kernel.validate();
    if (scale < 1) throw ParamError("DegradationSpec: scale must be >= 1");
    if (noise_level < 0.0) throw ParamError("DegradationSpec: noise level must be >= 0");
  }
};

namespace detail {
// Reflect (symmetric, edge-inclusive) index fold: -1 -> 0, n -> n-1.
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}
}  // namespace detail

/// True 2-D convolution with a centered kernel and reflect boundary. For the
/// point-symmetric Gaussian kernels used in the degradation model this
/// coincides with correlation; for general kernels the kernel is flipped.
inline Image convolve(const Image& img, const BlurKernel& k) {
  if (k.size > img.height || k.size > img.width)
    throw DimensionError("convolve: kernel larger than image");
  const int c0 = k.size / 2;
  Image out(img.height, img.width, img.channels);
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = 0; i < k.size; ++i) {
          const int sy = detail::reflect_index(y - (i - c0), img.height);
          for (int j = 0; j < k.size; ++j) {
            const int sx = detail::reflect_index(x - (j - c0), img.width);
            acc += k.at(i, j) * img.at(ch, sy, sx);
          }
        }
        out.at(ch, y, x) = acc;
      }
    }
  }
  return out;
}

namespace detail {
// Keys cubic interpolation kernel, a = -0.5.
inline double keys_cubic(double x) {
  x = std::fabs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}
}  // namespace detail

/// Bicubic decimation: 4-tap Keys kernel per axis, half-pixel (center-aligned)
/// sampling, reflect boundary. Output is ceil(H/s) x ceil(W/s).
inline Image bicubic_downsample(const Image& img, int s) {
  if (s < 1) throw ParamError("bicubic_downsample: scale must be >= 1");
  const int oh = (img.height + s - 1) / s;
  const int ow = (img.width + s - 1) / s;
  // Center of output sample o in input coordinates.
  auto src_pos = [s](int o) { return (o + 0.5) * s - 0.5; };
  // Separable resampling: rows first, then columns.
  Image tmp(img.height, ow, img.channels);
  for (int ch = 0; ch < img.channels; ++ch)
    for (int y = 0; y < img.height; ++y)
      for (int ox = 0; ox < ow; ++ox) {
        const double src = src_pos(ox);
        const int base = static_cast<int>(std::floor(src));
        const double t = src - base;
        double acc = 0.0;
        for (int tap = -1; tap <= 2; ++tap) {
          const double w = detail::keys_cubic(t - tap);
          const int sx = detail::reflect_index(base + tap, img.width);
          acc += w * img.at(ch, y, sx);
        }
        tmp.at(ch, y, ox) = acc;
      }
  Image out(oh, ow, img.channels);
  for (int ch = 0; ch < img.channels; ++ch)
    for (int oy = 0; oy < oh; ++oy) {
      const double src = src_pos(oy);
      const int base = static_cast<int>(std::floor(src));
      const double t = src - base;
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int tap = -1; tap <= 2; ++tap) {
          const double w = detail::keys_cubic(t - tap);
          const int sy = detail::reflect_index(base + tap, img.height);
          acc += w * tmp.at(ch, sy, ox);
        }
        out.at(ch, oy, ox) = acc;
      }
    }
  return out;
}

/// Additive white Gaussian noise with standard deviation level/255 on the
/// [0,1] intensity scale. Values are not clipped; level 0 is an exact no-op
/// and consumes no RNG draws.
inline Image add_noise(const Image& img, double level, Rng& rng) {
  if (level < 0.0) throw ParamError("add_noise: level must be >= 0");
  if (level == 0.0) return img;
  const double sd = level / 255.0;
  Image out = img;
  for (double& v : out.data) v += sd * rng.normal();
  return out;
}

/// The degradation pipeline: blur, bicubic downsample by spec.scale, then
/// additive noise. The HR image is center-cropped to a multiple of the scale
/// first so the output grid is unambiguous.
inline Image degrade(const Image& hr, const DegradationSpec& spec, Rng& rng) {
  spec.validate();
  const Image cropped = center_crop_to_multiple(hr, spec.scale);
  const Image blurred = convolve(cropped, build_kernel(spec.kernel));
  const Image down = bicubic_downsample(blurred, spec.scale);
  return add_noise(down, spec.noise_level, rng);
}

/// Uniform sampling ranges for random training degradations.
struct SamplingConfig {
  KernelKind kind = KernelKind::Isotropic;
  double sigma_min = 0.2, sigma_max = 4.0;
  double lambda_min = 0.2, lambda_max = 4.0;
  double theta_min = 0.0, theta_max = 3.14159265358979323846;
  double noise_min = 0.0, noise_max = 0.0;
  int scale = 4;
  int kernel_size = 21;
  // When true the lambda draws are treated as standard deviations and squared
  // before use as covariance eigenvalues.
  bool lambda_is_std = false;

  /// Noise-free isotropic ranges; sigma_max is 2.0 / 3.0 / 4.0 for x2/3/4.
  static SamplingConfig isotropic_default(int scale) {
    SamplingConfig c;
    c.kind = KernelKind::Isotropic;
    c.scale = scale;
    c.sigma_min = 0.2;
    c.sigma_max = scale == 2 ? 2.0 : (scale == 3 ? 3.0 : 4.0);
    return c;
  }

  /// Anisotropic kernels plus noise in [0, 25].
  static SamplingConfig general_default(int scale) {
    SamplingConfig c = isotropic_default(scale);
    c.kind = KernelKind::Anisotropic;
    c.noise_min = 0.0;
    c.noise_max = 25.0;
    return c;
  }

  void validate() const {
    if (sigma_min > sigma_max || lambda_min > lambda_max || theta_min > theta_max ||
        noise_min > noise_max)
      throw ParamError("SamplingConfig: empty range");
    if (!(sigma_min > 0.0) || !(lambda_min > 0.0))
      throw ParamError("SamplingConfig: sigma and lambda ranges must be positive");
    if (scale < 1) throw ParamError("SamplingConfig: scale must be >= 1");
    if (kernel_size < 3 || kernel_size % 2 == 0)
      throw ParamError("SamplingConfig: kernel size must be odd and >= 3");
  }
};

/// I.i.d. uniform draws from the configured intervals. Draw order is fixed:
/// sigma (or lambda1, lambda2, theta), then noise level.
inline DegradationSpec sample_degradation(Rng& rng, const SamplingConfig& cfg) {
  cfg.validate();
  DegradationSpec spec;
  spec.scale = cfg.scale;
  if (cfg.kind == KernelKind::Isotropic) {
    spec.kernel = KernelSpec::isotropic(rng.uniform(cfg.sigma_min, cfg.sigma_max), cfg.kernel_size);
  } else {
    double l1 = rng.uniform(cfg.lambda_min, cfg.lambda_max);
    double l2 = rng.uniform(cfg.lambda_min, cfg.lambda_max);
    const double theta = rng.uniform(cfg.theta_min, cfg.theta_max);
    if (cfg.lambda_is_std) {
      l1 *= l1;
      l2 *= l2;
    }
    spec.kernel = KernelSpec::anisotropic(l1, l2, theta, cfg.kernel_size);
  }
  spec.noise_level = rng.uniform(cfg.noise_min, cfg.noise_max);
  return spec;
}

}  // namespace dasr
