#pragma once

#include <array>
#include <string>
#include <vector>

#include "keyforge/image.hpp"

namespace keyforge {

/// 8-parameter planar homography chart,
///   H = [[t0 t1 t2], [t3 t4 t5], [t6 t7 1]],
/// mapping source pixel coordinates to destination pixel coordinates.
/// The bottom-right entry is pinned to 1; transforms whose inverse would
/// need a vanishing corner entry are rejected as degenerate.
struct PerspectiveParams {
  std::array<double, 8> theta{1, 0, 0, 0, 1, 0, 0, 0};

  static PerspectiveParams identity() { return PerspectiveParams{}; }
  static PerspectiveParams translation(double dx, double dy) {
    return PerspectiveParams{{1, 0, dx, 0, 1, dy, 0, 0}};
  }
  static PerspectiveParams scaling(double sx, double sy) {
    return PerspectiveParams{{sx, 0, 0, 0, sy, 0, 0, 0}};
  }

  double det3() const;  // determinant of the full 3x3 matrix
  bool invertible() const { return std::abs(det3()) > 1e-12; }
};

/// Per-component parameter statistics over a training set of transforms.
/// Degenerate (non-positive) standard deviations are replaced by 1 and
/// flagged in `sanitized`.
struct ParamStats {
  std::array<double, 8> mean{0, 0, 0, 0, 0, 0, 0, 0};
  std::array<double, 8> std{1, 1, 1, 1, 1, 1, 1, 1};
  std::array<bool, 8> sanitized{};

  static ParamStats from_samples(const std::vector<PerspectiveParams>& samples);
};

// Exact 4-point estimation: solves the 8x8 direct linear system with
// partial pivoting. Throws DegenerateCorrespondences on a singular system
// (three collinear or coincident points).
PerspectiveParams homography_from_correspondences(const std::array<Vec2, 4>& src,
                                                  const std::array<Vec2, 4>& dst);

// Throws PointAtInfinity when the projective denominator vanishes.
Vec2 apply_homography(const PerspectiveParams& p, Vec2 pt);

// Throws NonInvertibleTransform.
PerspectiveParams invert(const PerspectiveParams& p);

// Composition a(b(x)). Throws NonInvertibleTransform when the composite
// leaves the 8-parameter chart (vanishing corner entry).
PerspectiveParams compose(const PerspectiveParams& a, const PerspectiveParams& b);

// Inverse-mapped bilinear warp: output pixel (x,y) samples the input at
// H^-1 (x,y); out-of-bounds samples are 0.
RasterImage warp_image(const RasterImage& img, const PerspectiveParams& p, int out_w, int out_h);

std::array<double, 8> normalize_params(const PerspectiveParams& p, const ParamStats& s);
PerspectiveParams denormalize_params(const std::array<double, 8>& v, const ParamStats& s);

RasterImage flip_horizontal(const RasterImage& img);  // column mirror
RasterImage flip_vertical(const RasterImage& img);    // row mirror
BitMask flip_vertical(const BitMask& mask);

enum class Orientation { upright, flipped };

struct FlipDecision {
  Orientation orientation = Orientation::upright;
  double confidence = 0.5;  // in [0.5, 1]; < 0.6 means "try both"
};

/// Classical stand-in for a learned flip classifier: the blade edge with
/// the rougher height profile is declared the bitting side. `upright`
/// means the bitting faces up.
FlipDecision detect_flip_heuristic(const BitMask& mask);

ParamStats param_stats_from_json(const std::string& text);
std::string param_stats_to_json(const ParamStats& s);

}  // namespace keyforge
