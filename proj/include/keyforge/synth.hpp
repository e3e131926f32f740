#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "keyforge/geometry.hpp"
#include "keyforge/image.hpp"
#include "keyforge/keyspec.hpp"

namespace keyforge {

/// The square of canonical-frame coordinates a scene rectifies into:
/// marker corners map to the square's corners, axis-aligned in canvas
/// (= mask raster) coordinates. Keeping it square preserves aspect.
struct FrameSquare {
  Vec2 center;
  double half = 0.0;

  std::array<Vec2, 4> corners() const {
    return {Vec2{center.x - half, center.y - half}, Vec2{center.x + half, center.y - half},
            Vec2{center.x + half, center.y + half}, Vec2{center.x - half, center.y + half}};
  }
};

/// Full ground truth for one composed scene. theta maps scene pixels to
/// canvas (mask raster) pixels; flip=true means the rectified patch is
/// vertically mirrored (bitting down) and needs a row mirror.
struct SceneAnnotation {
  std::string id;
  std::string image_path;
  std::string mask_path;
  Box key_box;  // scene pixels, contains all warped foreground
  PerspectiveParams theta;
  bool flip = false;
  BittingCode code;
  std::optional<std::array<Vec2, 4>> marker_corners;  // scene pixels, TL TR BR BL
  FrameSquare frame;
  Keypoints mask_keypoints;  // canvas pixels
  uint64_t seed = 0;
  double px_per_mm = 0.0;
};

struct RenderOptions {
  double root_width_mm = 0.8;   // flat cut root; flanks ramp at 45 degrees
  double bow_width_mm = 10.0;   // rectangular bow stub at the left
  double bow_bottom_frac = 0.45;  // of blade height, keeps the stub out of
  double bow_top_frac = 1.6;      // the shoulder-detection band
  int margin_px = 4;
};

/// Ground-truth silhouette of a MACS-valid code, upright, with exact
/// shoulder/tip keypoints. Throws MacsViolation.
BitMask render_key_mask(const BittingCode& code, const KeySpec& spec, double px_per_mm,
                        const RenderOptions& opt = {});

/// Smooth low-frequency background with seeded noise.
RasterImage make_background(int width, int height, int channels, uint64_t seed);

/// Shades the silhouette, warps it by theta^-1 into the background and
/// optionally draws the four fiducial squares. Deterministic per seed.
/// Throws KeyOutOfFrame when the warped key leaves the background.
std::pair<RasterImage, SceneAnnotation> compose_scene(const BitMask& mask,
                                                      const RasterImage& background,
                                                      const PerspectiveParams& theta, bool frame,
                                                      uint64_t seed);

struct AugmentParams {
  double scale = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  bool flip = false;
};

/// Deterministic crop/scale/flip/shift with a consistent annotation
/// rewrite (box, theta, corners, flip flag).
std::pair<RasterImage, SceneAnnotation> augment(const RasterImage& img,
                                                const SceneAnnotation& ann,
                                                const AugmentParams& params);

/// Seeded augmentation; resamples parameters up to 10 times when the key
/// would leave the frame, then throws AugmentationClipsKey.
std::pair<RasterImage, SceneAnnotation> augment(const RasterImage& img,
                                                const SceneAnnotation& ann, uint64_t seed);

struct GenerateOptions {
  int count = 10;
  uint64_t seed = 1;
  double px_per_mm = 12.0;
  int scene_width = 768;
  int scene_height = 768;
  int channels = 3;
  bool frame = true;
  double min_key_px = 0.0;  // resample theta until the scene key box is this tall
};

/// Random MACS-valid code (uniform start, increments clamped to MACS).
BittingCode random_macs_valid_code(const KeySpec& spec, uint64_t seed);

/// Mild random scene->canvas homography for a frame square of the given
/// geometry (jittered corner placement).
PerspectiveParams random_scene_theta(const FrameSquare& canvas_frame, int scene_w, int scene_h,
                                     uint64_t seed);

/// Rebuilds a manifest scene from its recorded code, transform and seed,
/// optionally without the marker frame (the marker-removal control).
std::pair<RasterImage, SceneAnnotation> regenerate_scene(const SceneAnnotation& ann,
                                                         const KeySpec& spec,
                                                         const GenerateOptions& opt, bool frame);

/// Writes scenes/, masks/ and manifest.jsonl under `dir`; returns the
/// annotations. Fully deterministic for a fixed seed.
std::vector<SceneAnnotation> generate_dataset(const std::string& dir, const KeySpec& spec,
                                              const GenerateOptions& opt);

// Manifest serialization (JSON Lines, header line first).
std::string annotation_to_json(const SceneAnnotation& ann);
SceneAnnotation annotation_from_json(const std::string& line);
void write_manifest(const std::string& path, const GenerateOptions& opt,
                    const std::vector<SceneAnnotation>& annotations);
std::pair<GenerateOptions, std::vector<SceneAnnotation>> read_manifest(const std::string& path);

}  // namespace keyforge
