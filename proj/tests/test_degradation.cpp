#include "dasr/degradation/degrade.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "dasr/core/rng.hpp"

using namespace dasr;

namespace {

Image random_image(int h, int w, int c, Rng& rng) {
  Image img(h, w, c);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// Brute-force true convolution with reflect boundary, written independently
// of the library loop structure.
Image reference_convolve(const Image& img, const BlurKernel& k) {
  Image out(img.height, img.width, img.channels);
  const int c0 = k.size / 2;
  for (int ch = 0; ch < img.channels; ++ch)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = 0; i < k.size; ++i)
          for (int j = 0; j < k.size; ++j)
            acc += k.at(i, j) *
                   img.at(ch, reflect(y - i + c0, img.height), reflect(x - j + c0, img.width));
        out.at(ch, y, x) = acc;
      }
  return out;
}

double keys_weight(double x) {
  const double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0) return a * (x * x * x - 5.0 * x * x + 8.0 * x - 4.0);
  return 0.0;
}

// Scalar brute-force bicubic decimation oracle: half-pixel centers, 4 taps
// per axis, reflect boundary, evaluated in 2-D directly (not separably).
Image reference_bicubic(const Image& img, int s) {
  const int oh = (img.height + s - 1) / s, ow = (img.width + s - 1) / s;
  Image out(oh, ow, img.channels);
  for (int ch = 0; ch < img.channels; ++ch)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double sy = (oy + 0.5) * s - 0.5;
        const double sx = (ox + 0.5) * s - 0.5;
        const int by = static_cast<int>(std::floor(sy));
        const int bx = static_cast<int>(std::floor(sx));
        double acc = 0.0;
        for (int i = -1; i <= 2; ++i)
          for (int j = -1; j <= 2; ++j)
            acc += keys_weight(sy - (by + i)) * keys_weight(sx - (bx + j)) *
                   img.at(ch, reflect(by + i, img.height), reflect(bx + j, img.width));
        out.at(ch, oy, ox) = acc;
      }
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

BlurKernel random_normalized_kernel(int size, Rng& rng) {
  BlurKernel k;
  k.size = size;
  k.weights.resize(static_cast<size_t>(size) * size);
  double z = 0.0;
  for (double& w : k.weights) {
    w = rng.uniform();
    z += w;
  }
  for (double& w : k.weights) w /= z;
  return k;
}

}  // namespace

TEST(Convolve, DeltaKernelIsIdentity) {
  Rng rng(3);
  const Image img = random_image(12, 9, 3, rng);
  const Image out = convolve(img, delta_kernel(5));
  for (size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(img.data[i], out.data[i]);
}

TEST(Convolve, PartitionOfUnityOnConstantImage) {
  Rng rng(4);
  const Image img = Image::constant(10, 10, 1, 0.37);
  const Image out = convolve(img, random_normalized_kernel(5, rng));
  for (double v : out.data) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Convolve, MatchesBruteForceOracle) {
  Rng rng(5);
  const Image img = random_image(8, 8, 1, rng);
  const BlurKernel k = random_normalized_kernel(3, rng);
  EXPECT_LT(max_abs_diff(convolve(img, k), reference_convolve(img, k)), 1e-12);

  const Image img3 = random_image(11, 7, 3, rng);
  const BlurKernel k5 = random_normalized_kernel(5, rng);
  EXPECT_LT(max_abs_diff(convolve(img3, k5), reference_convolve(img3, k5)), 1e-12);
}

TEST(Convolve, KernelLargerThanImageThrows) {
  Rng rng(6);
  const Image img = random_image(4, 4, 1, rng);
  EXPECT_THROW(convolve(img, delta_kernel(5)), DimensionError);
}

TEST(Convolve, Linearity) {
  Rng rng(7);
  const Image x = random_image(9, 9, 1, rng);
  const Image y = random_image(9, 9, 1, rng);
  const BlurKernel k = random_normalized_kernel(3, rng);
  const double a = 0.7, b = -1.3;
  Image combo(9, 9, 1);
  for (size_t i = 0; i < combo.data.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
  const Image lhs = convolve(combo, k);
  const Image cx = convolve(x, k), cy = convolve(y, k);
  for (size_t i = 0; i < lhs.data.size(); ++i)
    EXPECT_NEAR(lhs.data[i], a * cx.data[i] + b * cy.data[i], 1e-9);
}

TEST(Bicubic, ConstantImageIsExact) {
  const Image img = Image::constant(12, 12, 3, 0.61);
  for (int s : {2, 3, 4}) {
    const Image out = bicubic_downsample(img, s);
    EXPECT_EQ(out.height, 12 / s);
    for (double v : out.data) EXPECT_NEAR(v, 0.61, 1e-12);
  }
}

TEST(Bicubic, ScaleOneIsIdentity) {
  Rng rng(8);
  const Image img = random_image(7, 9, 1, rng);
  const Image out = bicubic_downsample(img, 1);
  EXPECT_LT(max_abs_diff(img, out), 1e-12);
}

TEST(Bicubic, ReproducesLinearRampInInterior) {
  const int w = 32, s = 2;
  Image img(8, w, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < w; ++x) img.at(0, y, x) = 0.01 * x + 0.2;
  const Image out = bicubic_downsample(img, s);
  for (int ox = 0; ox < out.width; ++ox) {
    const double src = (ox + 0.5) * s - 0.5;
    const int base = static_cast<int>(std::floor(src));
    if (base - 1 < 0 || base + 2 >= w) continue;  // boundary columns excluded
    EXPECT_NEAR(out.at(0, 3, ox), 0.01 * src + 0.2, 1e-9) << "ox=" << ox;
  }
  const Image ref = reference_bicubic(img, s);
  EXPECT_LT(max_abs_diff(out, ref), 1e-9);
}

TEST(Bicubic, MatchesBruteForceOracleOnRandomImages) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const int s = 2 + trial % 3;
    const Image img = random_image(12 * s, 8 * s, trial % 2 ? 3 : 1, rng);
    EXPECT_LT(max_abs_diff(bicubic_downsample(img, s), reference_bicubic(img, s)), 1e-9);
  }
}

TEST(Bicubic, BadScaleThrows) {
  const Image img = Image::constant(8, 8, 1, 0.5);
  EXPECT_THROW(bicubic_downsample(img, 0), ParamError);
}

TEST(AddNoise, LevelZeroIsExactIdentity) {
  Rng rng(10);
  const Image img = random_image(6, 6, 3, rng);
  Rng noise_rng(42);
  const Image out = add_noise(img, 0.0, noise_rng);
  for (size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(img.data[i], out.data[i]);
}

TEST(AddNoise, SameSeedIsBitIdentical) {
  Rng rng(11);
  const Image img = random_image(6, 6, 3, rng);
  Rng a(123), b(123);
  const Image x = add_noise(img, 10.0, a);
  const Image y = add_noise(img, 10.0, b);
  for (size_t i = 0; i < x.data.size(); ++i) EXPECT_EQ(x.data[i], y.data[i]);
}

TEST(AddNoise, EmpiricalStandardDeviation) {
  const Image img = Image::constant(1000, 1000, 1, 0.5);
  Rng rng(12);
  const Image out = add_noise(img, 25.0, rng);
  double mean = 0.0;
  for (size_t i = 0; i < out.data.size(); ++i) mean += out.data[i] - img.data[i];
  mean /= static_cast<double>(out.data.size());
  double var = 0.0;
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double d = out.data[i] - img.data[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(out.data.size() - 1);
  const double sd = std::sqrt(var);
  EXPECT_NEAR(sd, 25.0 / 255.0, 0.01 * 25.0 / 255.0);
}

TEST(AddNoise, NegativeLevelThrows) {
  const Image img = Image::constant(4, 4, 1, 0.5);
  Rng rng(13);
  EXPECT_THROW(add_noise(img, -1.0, rng), ParamError);
}

TEST(Degrade, NearDeltaIdentity) {
  Rng rng(14);
  const Image img = random_image(16, 16, 3, rng);
  DegradationSpec spec;
  spec.kernel = KernelSpec::isotropic(1e-3, 13);
  spec.scale = 1;
  spec.noise_level = 0.0;
  Rng r(1);
  const Image out = degrade(img, spec, r);
  EXPECT_LT(max_abs_diff(img, out), 1e-9);
}

TEST(Degrade, EqualsManuallyChainedComponents) {
  Rng rng(15);
  const Image img = random_image(25, 27, 3, rng);  // not divisible by 4: exercises the crop
  DegradationSpec spec;
  spec.kernel = KernelSpec::anisotropic(2.0, 0.5, 0.7, 11);
  spec.scale = 4;
  spec.noise_level = 15.0;

  Rng r1(77);
  const Image piped = degrade(img, spec, r1);

  Rng r2(77);
  const Image cropped = center_crop_to_multiple(img, spec.scale);
  const Image manual = add_noise(
      bicubic_downsample(convolve(cropped, build_kernel(spec.kernel)), spec.scale),
      spec.noise_level, r2);

  ASSERT_EQ(piped.data.size(), manual.data.size());
  for (size_t i = 0; i < piped.data.size(); ++i) EXPECT_EQ(piped.data[i], manual.data[i]);
}

TEST(Degrade, PureFunctionOfSeed) {
  Rng rng(16);
  const Image img = random_image(20, 20, 3, rng);
  DegradationSpec spec;
  spec.kernel = KernelSpec::isotropic(1.5, 9);
  spec.scale = 2;
  spec.noise_level = 8.0;
  Rng a(5), b(5);
  const Image x = degrade(img, spec, a);
  const Image y = degrade(img, spec, b);
  for (size_t i = 0; i < x.data.size(); ++i) EXPECT_EQ(x.data[i], y.data[i]);
}

TEST(SampleDegradation, DegenerateRange) {
  SamplingConfig cfg = SamplingConfig::isotropic_default(4);
  cfg.sigma_min = cfg.sigma_max = 0.2;
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    const DegradationSpec spec = sample_degradation(rng, cfg);
    EXPECT_DOUBLE_EQ(spec.kernel.sigma, 0.2);
  }
}

TEST(SampleDegradation, SampleMeanMatchesMoment) {
  SamplingConfig cfg = SamplingConfig::isotropic_default(4);
  cfg.sigma_min = 0.2;
  cfg.sigma_max = 2.0;
  Rng rng(18);
  double mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) mean += sample_degradation(rng, cfg).kernel.sigma;
  mean /= n;
  EXPECT_NEAR(mean, 1.1, 0.011);
}

TEST(SampleDegradation, DefaultRangesPerScale) {
  EXPECT_DOUBLE_EQ(SamplingConfig::isotropic_default(2).sigma_max, 2.0);
  EXPECT_DOUBLE_EQ(SamplingConfig::isotropic_default(3).sigma_max, 3.0);
  EXPECT_DOUBLE_EQ(SamplingConfig::isotropic_default(4).sigma_max, 4.0);
  EXPECT_DOUBLE_EQ(SamplingConfig::isotropic_default(4).sigma_min, 0.2);
  const SamplingConfig g = SamplingConfig::general_default(4);
  EXPECT_DOUBLE_EQ(g.lambda_min, 0.2);
  EXPECT_DOUBLE_EQ(g.lambda_max, 4.0);
  EXPECT_DOUBLE_EQ(g.noise_max, 25.0);
  EXPECT_NEAR(g.theta_max, 3.14159265358979, 1e-9);
}

TEST(SampleDegradation, EmptyRangeThrows) {
  SamplingConfig cfg = SamplingConfig::isotropic_default(4);
  cfg.sigma_min = 2.0;
  cfg.sigma_max = 1.0;
  Rng rng(19);
  EXPECT_THROW(sample_degradation(rng, cfg), ParamError);
}

TEST(SampleDegradation, LambdaStdSwitchSquaresDraws) {
  SamplingConfig cfg = SamplingConfig::general_default(4);
  cfg.lambda_min = cfg.lambda_max = 1.5;
  cfg.lambda_is_std = true;
  Rng rng(20);
  const DegradationSpec spec = sample_degradation(rng, cfg);
  EXPECT_DOUBLE_EQ(spec.kernel.lambda1, 2.25);
  EXPECT_DOUBLE_EQ(spec.kernel.lambda2, 2.25);
}
