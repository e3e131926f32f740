#pragma once

#include <cassert>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace keyforge {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct PixelCoord {
  int x = 0;
  int y = 0;
  bool operator==(const PixelCoord&) const = default;
};

/// Axis-aligned box in pixel coordinates, half-open semantics are not
/// assumed; x1/y1 are the far corner.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
};

/// Row-major raster with samples in [0,1]; 1 (gray) or 3 (RGB) channels.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> samples;

  static RasterImage zeros(int w, int h, int c) {
    RasterImage img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.samples.assign(static_cast<size_t>(w) * h * c, 0.0f);
    return img;
  }
  float at(int x, int y, int c) const {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float& at(int x, int y, int c) {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// Two reference points aligning a mask to blade coordinates.
struct Keypoints {
  Vec2 shoulder;
  Vec2 tip;
};

/// Binary key silhouette, true (1) = key material. Upright convention:
/// bitting faces up, blade points right, shoulder.x < tip.x.
struct BitMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;
  std::optional<Keypoints> keypoints;

  static BitMask zeros(int w, int h) {
    BitMask m;
    m.width = w;
    m.height = h;
    m.bits.assign(static_cast<size_t>(w) * h, 0);
    return m;
  }
  bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  size_t count() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
};

// 8-bit PNG i/o. Gray masks are written as 0/255; on read, >=128 is true.
RasterImage read_png(const std::string& path);
void write_png(const std::string& path, const RasterImage& img);
BitMask read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const BitMask& mask);

RasterImage mask_to_image(const BitMask& mask);
BitMask image_to_mask(const RasterImage& img, float threshold = 0.5f);

}  // namespace keyforge
