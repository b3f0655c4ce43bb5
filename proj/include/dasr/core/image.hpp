#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "dasr/core/error.hpp"

namespace dasr {

/// Dense image with values in [0,1] (training targets may exceed the range
/// transiently, e.g. after additive noise; clipping happens only at export).
/// Layout is planar, channel-major: data[(c*H + y)*W + x].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c) {
    if (h < 1 || w < 1 || (c != 1 && c != 3))
      throw DimensionError("Image: dimensions must be >= 1 and channels 1 or 3");
    data.assign(static_cast<size_t>(h) * w * c, 0.0);
  }

  static Image constant(int h, int w, int c, double v) {
    Image img(h, w, c);
    for (double& x : img.data) x = v;
    return img;
  }

  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }

  size_t size() const { return data.size(); }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Largest centered crop whose sides are multiples of `s`.
inline Image center_crop_to_multiple(const Image& img, int s) {
  if (s < 1) throw ParamError("center_crop_to_multiple: s must be >= 1");
  const int h = (img.height / s) * s;
  const int w = (img.width / s) * s;
  if (h < 1 || w < 1) throw DimensionError("center_crop_to_multiple: image smaller than scale");
  if (h == img.height && w == img.width) return img;
  const int y0 = (img.height - h) / 2;
  const int x0 = (img.width - w) / 2;
  Image out(h, w, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

/// Axis-aligned crop. Caller guarantees the window fits.
inline Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width)
    throw DimensionError("crop: window out of bounds");
  Image out(h, w, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

/// Counter-clockwise rotation by k*90 degrees.
inline Image rotate90(const Image& img, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  const int h = img.height, w = img.width;
  const bool swap = (k % 2) == 1;
  Image out(swap ? w : h, swap ? h : w, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int ny = 0, nx = 0;
        switch (k) {
          case 1: ny = w - 1 - x; nx = y; break;
          case 2: ny = h - 1 - y; nx = w - 1 - x; break;
          case 3: ny = x; nx = h - 1 - y; break;
        }
        out.at(c, ny, nx) = img.at(c, y, x);
      }
  return out;
}

inline Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

inline Image flip_vertical(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, img.height - 1 - y, x);
  return out;
}

}  // namespace dasr
