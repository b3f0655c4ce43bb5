#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dasr/core/error.hpp"
#include "dasr/core/image.hpp"

namespace dasr {

/// Export quantization: clip to [0,1], then round half away from zero.
inline uint8_t quantize_u8(double v) {
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  const double scaled = v * 255.0;
  return static_cast<uint8_t>(std::floor(scaled + 0.5));
}

inline std::vector<uint8_t> to_interleaved_u8(const Image& img) {
  std::vector<uint8_t> out(static_cast<size_t>(img.height) * img.width * img.channels);
  size_t i = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out[i++] = quantize_u8(img.at(c, y, x));
  return out;
}

inline Image from_interleaved_u8(const uint8_t* bytes, int h, int w, int channels) {
  Image img(h, w, channels);
  size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) img.at(c, y, x) = bytes[i++] / 255.0;
  return img;
}

// ---------------------------------------------------------------------------
// PNG (8-bit gray or RGB)
// ---------------------------------------------------------------------------

inline void write_png(const Image& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("write_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  const int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::vector<uint8_t> bytes = to_interleaved_u8(img);
  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("read_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("read_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // Normalize to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: unsupported channel count in " + path);
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * ch);
  const size_t stride = static_cast<size_t>(w) * ch;
  for (int y = 0; y < h; ++y) png_read_row(png, bytes.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return from_interleaved_u8(bytes.data(), h, w, ch);
}

// ---------------------------------------------------------------------------
// Binary PPM (P6) / PGM (P5)
// ---------------------------------------------------------------------------

inline void write_pnm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pnm: cannot open " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  const std::vector<uint8_t> bytes = to_interleaved_u8(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write_pnm: short write to " + path);
}

inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pnm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw IoError("read_pnm: bad magic in " + path);
  auto next_int = [&in, &path]() {
    // Skips whitespace and '#' comment lines between header fields.
    int c = in.peek();
    while (c == '#' || std::isspace(c)) {
      if (c == '#') in.ignore(1 << 20, '\n');
      else in.get();
      c = in.peek();
    }
    int v = 0;
    if (!(in >> v)) throw IoError("read_pnm: truncated header in " + path);
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw IoError("read_pnm: only maxval 255 supported in " + path);
  in.get();  // single whitespace after maxval
  const int ch = magic == "P6" ? 3 : 1;
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * ch);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("read_pnm: truncated pixel data in " + path);
  return from_interleaved_u8(bytes.data(), h, w, ch);
}

inline Image read_image(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "png" || ext == "PNG") return read_png(path);
  if (ext == "ppm" || ext == "pgm") return read_pnm(path);
  throw IoError("read_image: unsupported extension on " + path);
}

inline void write_image(const Image& img, const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "png" || ext == "PNG") return write_png(img, path);
  if (ext == "ppm" || ext == "pgm") return write_pnm(img, path);
  throw IoError("write_image: unsupported extension on " + path);
}

}  // namespace dasr
