#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "dasr/core/error.hpp"

namespace dasr {

enum class KernelKind { Isotropic, Anisotropic };

/// Parameters of a Gaussian point-spread function. Isotropic kernels are
/// described by a single width sigma (pixels); anisotropic kernels by the two
/// eigenvalues lambda1, lambda2 of the covariance (variances, pixels^2) and a
/// rotation angle theta in [0, pi).
struct KernelSpec {
  KernelKind kind = KernelKind::Isotropic;
  double sigma = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double theta = 0.0;
  int size = 21;

  static KernelSpec isotropic(double sigma, int size = 21) {
    KernelSpec s;
    s.kind = KernelKind::Isotropic;
    s.sigma = sigma;
    s.size = size;
    return s;
  }

  static KernelSpec anisotropic(double lambda1, double lambda2, double theta, int size = 21) {
    KernelSpec s;
    s.kind = KernelKind::Anisotropic;
    s.lambda1 = lambda1;
    s.lambda2 = lambda2;
    s.theta = theta;
    s.size = size;
    return s;
  }

  void validate() const {
    if (size < 3 || size % 2 == 0) throw ParamError("KernelSpec: size must be odd and >= 3");
    if (kind == KernelKind::Isotropic) {
      if (!(sigma > 0.0)) throw ParamError("KernelSpec: sigma must be > 0");
    } else {
      if (!(lambda1 > 0.0) || !(lambda2 > 0.0))
        throw ParamError("KernelSpec: lambda1, lambda2 must be > 0");
    }
  }
};

/// Normalized nonnegative blur kernel on an odd square grid.
struct BlurKernel {
  int size = 0;
  std::vector<double> weights;  // row-major, size*size

  double& at(int y, int x) { return weights[static_cast<size_t>(y) * size + x]; }
  double at(int y, int x) const { return weights[static_cast<size_t>(y) * size + x]; }

  double sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

/// Evaluates exp(-1/2 d^T Sigma^-1 d) on the centered grid and normalizes to
/// sum 1. Sigma = R(theta) diag(lambda1, lambda2) R(theta)^T for anisotropic
/// kernels, sigma^2 I for isotropic ones. d = (x offset, y offset).
inline BlurKernel build_kernel(const KernelSpec& spec) {
  spec.validate();
  double ixx = 0.0, ixy = 0.0, iyy = 0.0;  // Sigma^-1 entries
  if (spec.kind == KernelKind::Isotropic) {
    ixx = iyy = 1.0 / (spec.sigma * spec.sigma);
  } else {
    const double c = std::cos(spec.theta), s = std::sin(spec.theta);
    const double a = 1.0 / spec.lambda1, b = 1.0 / spec.lambda2;
    // R diag(1/l1, 1/l2) R^T
    ixx = c * c * a + s * s * b;
    iyy = s * s * a + c * c * b;
    ixy = c * s * (a - b);
  }
  BlurKernel k;
  k.size = spec.size;
  k.weights.assign(static_cast<size_t>(spec.size) * spec.size, 0.0);
  const int c = spec.size / 2;
  double total = 0.0;
  for (int y = 0; y < spec.size; ++y) {
    for (int x = 0; x < spec.size; ++x) {
      const double dx = x - c, dy = y - c;
      const double q = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy;
      const double w = std::exp(-0.5 * q);
      k.at(y, x) = w;
      total += w;
    }
  }
  for (double& w : k.weights) w /= total;
  return k;
}

/// Discrete delta kernel (identity under convolution).
inline BlurKernel delta_kernel(int size = 3) {
  if (size < 1 || size % 2 == 0) throw ParamError("delta_kernel: size must be odd");
  BlurKernel k;
  k.size = size;
  k.weights.assign(static_cast<size_t>(size) * size, 0.0);
  k.at(size / 2, size / 2) = 1.0;
  return k;
}

inline void write_kernel_csv(const BlurKernel& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_kernel_csv: cannot open " + path);
  out.precision(17);
  for (int y = 0; y < k.size; ++y) {
    for (int x = 0; x < k.size; ++x) {
      if (x) out << ",";
      out << k.at(y, x);
    }
    out << "\n";
  }
}

}  // namespace dasr
