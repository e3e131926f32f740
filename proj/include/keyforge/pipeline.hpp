#pragma once

#include <optional>
#include <string>
#include <vector>

#include "keyforge/metrics.hpp"
#include "keyforge/model3d.hpp"
#include "keyforge/synth.hpp"

namespace keyforge {

enum class Segmenter { threshold, mask_file };
enum class Detector { annotation, marker_box };

struct PipelineConfig {
  std::string keyspec_path;
  KeySpec spec;
  Segmenter segmenter = Segmenter::threshold;
  Detector detector = Detector::annotation;
  int patch_size = 128;
  int mask_size = 56;   // audit-mask resolution written per scene
  double mpe_gate = 0.012;
  int stations = 256;
  int ring = 128;
  std::string out_dir;
  bool write_artifacts = true;

  void validate() const;  // throws ConfigInvalid
  static PipelineConfig from_json(const std::string& text);
};

enum class Stage { detect, warp, segment, decode, macs, mesh, done };
const char* stage_name(Stage s);

struct KeyReport {
  std::string scene_id;
  Stage completed = Stage::detect;
  std::string failure;  // empty on success
  Box key_box;
  std::optional<BittingCode> code;
  std::vector<double> heights;
  std::optional<double> mpe;             // vs ground truth when known
  std::optional<double> mean_pin_error;  // vs ground truth when known
  bool macs_valid = false;
  bool flip_applied = false;
  double flip_confidence = 0.5;           // P(flipped) from the heuristic
  double segmentation_confidence = 0.0;   // boundary-smoothness proxy
  std::string stl_path;  // empty when no STL was written
  bool pass = false;     // macs valid, MPE <= gate when known, STL written

  std::string to_json() const;
};

struct PipelineInput {
  std::string scene_id;
  std::optional<SceneAnnotation> annotation;
  std::optional<std::array<Vec2, 4>> corners;
  std::optional<BitMask> gt_mask;  // for MPE and the mask_file segmenter
};

struct PipelineArtifacts {
  RasterImage patch;  // rectified, flip-corrected
  BitMask mask;       // decoded mask with keypoints
};

KeyReport run_pipeline(const RasterImage& scene, const PipelineInput& input,
                       const PipelineConfig& config, PipelineArtifacts* artifacts = nullptr);

struct EvalArrangement {
  bool augmented = false;
  bool frame = true;
};

struct EvalResult {
  std::string report_json;
  int scenes = 0;
  int exact_codes = 0;
  double exact_code_rate = 0.0;
};

/// Runs the pipeline over a manifest and writes report.json (plus per-scene
/// artifacts) under config.out_dir. `noframe` regenerates the scenes
/// without fiducials from the recorded seeds.
EvalResult eval_dataset(const std::string& manifest_path, const PipelineConfig& config,
                        const EvalArrangement& arrangement);

}  // namespace keyforge
