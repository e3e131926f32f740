#pragma once

#include <unistd.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "keyforge/geometry.hpp"
#include "keyforge/image.hpp"

namespace kftest {

using keyforge::PerspectiveParams;
using keyforge::RasterImage;
using keyforge::Vec2;

// Smooth low-curvature field; bilinear resampling stays well under 0.02.
inline RasterImage gradient_image(int w, int h, int channels = 1) {
  RasterImage img = RasterImage::zeros(w, h, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const double v = 0.5 + 0.25 * std::sin(2.0 * M_PI * x / w + c) *
                                   std::cos(2.0 * M_PI * y / h);
        img.at(x, y, c) = static_cast<float>(v);
      }
  return img;
}

// Random homography with entries in [-1,1], corner pinned to 1, |det| > 0.1.
inline PerspectiveParams random_homography(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    PerspectiveParams p;
    for (int i = 0; i < 8; ++i) p.theta[i] = u(rng);
    if (std::abs(p.det3()) > 0.1) return p;
  }
}

// Four generic source points such that both the sources and their images
// stay affinely non-degenerate and away from the line at infinity.
inline bool generic_quad(const PerspectiveParams& h, std::mt19937_64& rng,
                         std::array<Vec2, 4>& src, std::array<Vec2, 4>& dst) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::array<Vec2, 4> base{Vec2{-1, -1}, Vec2{1, -1}, Vec2{1, 1}, Vec2{-1, 1}};
  for (int i = 0; i < 4; ++i)
    src[i] = {base[i].x + 0.3 * u(rng), base[i].y + 0.3 * u(rng)};

  auto area2 = [](Vec2 a, Vec2 b, Vec2 c) {
    return std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
  };
  for (int i = 0; i < 4; ++i) {
    const double w = h.theta[6] * src[i].x + h.theta[7] * src[i].y + 1.0;
    if (std::abs(w) < 0.1) return false;
    dst[i] = keyforge::apply_homography(h, src[i]);
    if (std::abs(dst[i].x) > 50 || std::abs(dst[i].y) > 50) return false;
  }
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      for (int c = b + 1; c < 4; ++c) {
        if (area2(src[a], src[b], src[c]) < 0.05) return false;
        if (area2(dst[a], dst[b], dst[c]) < 0.05) return false;
      }
  return true;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("keyforge_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path.string() : (path / rel).string();
  }
};

}  // namespace kftest
