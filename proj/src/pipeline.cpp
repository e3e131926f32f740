#include "keyforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "keyforge/bitting.hpp"
#include "keyforge/errors.hpp"

namespace fs = std::filesystem;

namespace keyforge {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Canvas (mask raster) -> patch transform: the canonical frame square maps
// onto the full patch.
PerspectiveParams canvas_to_patch(const FrameSquare& frame, int patch_size) {
  const double s = (patch_size - 1) / (2.0 * frame.half);
  return PerspectiveParams{{s, 0, -(frame.center.x - frame.half) * s,
                            0, s, -(frame.center.y - frame.half) * s,
                            0, 0}};
}

std::array<Vec2, 4> patch_corners(int patch_size) {
  const double d = patch_size - 1;
  return {Vec2{0, 0}, Vec2{d, 0}, Vec2{d, d}, Vec2{0, d}};
}

BitMask downsample_nearest(const BitMask& mask, int size) {
  BitMask out = BitMask::zeros(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(mask.width - 1,
                              static_cast<int>(std::lround(x * double(mask.width) / size)));
      const int sy = std::min(mask.height - 1,
                              static_cast<int>(std::lround(y * double(mask.height) / size)));
      out.set(x, y, mask.at(sx, sy));
    }
  return out;
}

struct Decoded {
  Keypoints keypoints;
  std::vector<double> heights;
  BittingCode code;
  BitMask mask;  // with keypoints attached
};

Decoded decode_mask(const BitMask& mask, const KeySpec& spec) {
  Decoded d;
  d.mask = mask;
  d.keypoints = locate_keypoints(mask);
  d.mask.keypoints = d.keypoints;
  d.heights = cast_virtual_pins(d.mask, spec);
  d.code = heights_to_code(d.heights, spec);
  return d;
}

double segmentation_confidence(const BitMask& mask) {
  // Boundary-smoothness proxy: bbox perimeter over traced boundary length.
  try {
    const auto boundary = extract_boundary(mask);
    int x0 = mask.width, x1 = -1, y0 = mask.height, y1 = -1;
    for (const auto& p : boundary) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    const double bound = 2.0 * ((x1 - x0) + (y1 - y0)) + 2.0;
    if (boundary.empty()) return 0.0;
    return std::clamp(bound / static_cast<double>(boundary.size()), 0.0, 1.0);
  } catch (const Error&) {
    return 0.0;
  }
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::detect: return "detect";
    case Stage::warp: return "warp";
    case Stage::segment: return "segment";
    case Stage::decode: return "decode";
    case Stage::macs: return "macs";
    case Stage::mesh: return "mesh";
    case Stage::done: return "done";
  }
  return "?";
}

void PipelineConfig::validate() const {
  if (patch_size < 64) throw ConfigInvalid("patch size must be at least 64");
  if (mask_size < 8) throw ConfigInvalid("mask size must be at least 8");
  if (!(mpe_gate > 0)) throw ConfigInvalid("mpe_gate must be positive");
  if (stations < 2 || ring < 8) throw ConfigInvalid("stations >= 2 and ring >= 8 required");
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("config parse error: ") + e.what());
  }
  PipelineConfig cfg;
  cfg.keyspec_path = j.value("keyspec", std::string());
  const std::string seg = j.value("segmenter", std::string("threshold"));
  if (seg == "threshold")
    cfg.segmenter = Segmenter::threshold;
  else if (seg == "mask_file")
    cfg.segmenter = Segmenter::mask_file;
  else
    throw ConfigInvalid("unknown segmenter '" + seg + "'");
  const std::string det = j.value("detector", std::string("annotation"));
  if (det == "annotation")
    cfg.detector = Detector::annotation;
  else if (det == "marker_box")
    cfg.detector = Detector::marker_box;
  else
    throw ConfigInvalid("unknown detector '" + det + "'");
  cfg.patch_size = j.value("patch_size", 128);
  cfg.mask_size = j.value("mask_size", 56);
  cfg.mpe_gate = j.value("mpe_gate", 0.012);
  cfg.stations = j.value("stations", 256);
  cfg.ring = j.value("ring", 128);
  cfg.out_dir = j.value("out_dir", std::string());
  cfg.validate();
  return cfg;
}

std::string KeyReport::to_json() const {
  nlohmann::ordered_json j;
  j["scene_id"] = scene_id;
  j["completed"] = stage_name(completed);
  j["failure"] = failure.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(failure);
  j["box"] = {key_box.x0, key_box.y0, key_box.x1, key_box.y1};
  j["code"] = code ? nlohmann::ordered_json(code->to_string()) : nlohmann::ordered_json();
  j["heights"] = heights;
  j["mpe"] = mpe ? nlohmann::ordered_json(*mpe) : nlohmann::ordered_json();
  j["mean_pin_error"] =
      mean_pin_error ? nlohmann::ordered_json(*mean_pin_error) : nlohmann::ordered_json();
  j["macs_valid"] = macs_valid;
  j["flip_applied"] = flip_applied;
  j["flip_confidence"] = flip_confidence;
  j["segmentation_confidence"] = segmentation_confidence;
  j["stl"] = stl_path.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(stl_path);
  j["pass"] = pass;
  return j.dump();
}

KeyReport run_pipeline(const RasterImage& scene, const PipelineInput& input,
                       const PipelineConfig& config, PipelineArtifacts* artifacts) {
  config.validate();
  const KeySpec& spec = config.spec;
  KeyReport report;
  report.scene_id = input.scene_id;

  const fs::path scene_dir =
      config.out_dir.empty() ? fs::path() : fs::path(config.out_dir) / input.scene_id;
  const bool save = config.write_artifacts && !config.out_dir.empty();
  if (save) fs::create_directories(scene_dir);

  // (1) detect: key box from the annotation or the marker frame interior.
  PerspectiveParams theta_patch;
  try {
    if (config.detector == Detector::annotation) {
      if (!input.annotation) throw Error("annotation detector needs an annotation");
      report.key_box = input.annotation->key_box;
    } else {
      std::optional<std::array<Vec2, 4>> corners = input.corners;
      if (!corners && input.annotation) corners = input.annotation->marker_corners;
      if (!corners) throw Error("marker_box detector needs marker corners");
      Box b{(*corners)[0].x, (*corners)[0].y, (*corners)[0].x, (*corners)[0].y};
      for (const Vec2& p : *corners) {
        b.x0 = std::min(b.x0, p.x);
        b.y0 = std::min(b.y0, p.y);
        b.x1 = std::max(b.x1, p.x);
        b.y1 = std::max(b.y1, p.y);
      }
      report.key_box = b;
    }
  } catch (const Error& e) {
    report.failure = std::string("DetectFail: ") + e.what();
    return report;
  }
  report.completed = Stage::detect;

  // (2) rectify to the upright patch.
  RasterImage patch;
  try {
    if (config.detector == Detector::annotation) {
      theta_patch = compose(canvas_to_patch(input.annotation->frame, config.patch_size),
                            input.annotation->theta);
    } else {
      std::optional<std::array<Vec2, 4>> corners = input.corners;
      if (!corners) corners = input.annotation->marker_corners;
      theta_patch = homography_from_correspondences(*corners, patch_corners(config.patch_size));
    }
    patch = warp_image(scene, theta_patch, config.patch_size, config.patch_size);
  } catch (const Error& e) {
    report.failure = std::string("WarpFail: ") + e.what();
    return report;
  }
  report.completed = Stage::warp;

  // (3) segment.
  BitMask mask;
  try {
    if (config.segmenter == Segmenter::threshold) {
      mask = segment_threshold(patch);
    } else {
      if (!input.gt_mask || !input.annotation)
        throw Error("mask_file segmenter needs the ground-truth mask");
      const PerspectiveParams t =
          canvas_to_patch(input.annotation->frame, config.patch_size);
      RasterImage warped =
          warp_image(mask_to_image(*input.gt_mask), t, config.patch_size, config.patch_size);
      mask = image_to_mask(warped);
      if (input.annotation->flip) mask = flip_vertical(mask);  // mirror like the patch
    }
  } catch (const Error& e) {
    report.failure = std::string("SegmentFail: ") + e.what();
    return report;
  }
  report.completed = Stage::segment;

  // Orientation: the rougher edge is the bitting side.
  Decoded decoded;
  bool decoded_ok = false;
  std::string decode_error;
  try {
    const FlipDecision fd = detect_flip_heuristic(mask);
    const bool says_flipped = fd.orientation == Orientation::flipped;
    report.flip_confidence = says_flipped ? fd.confidence : 1.0 - fd.confidence;

    auto try_decode = [&](const BitMask& m, bool flipped_view) -> bool {
      try {
        decoded = decode_mask(m, spec);
        report.flip_applied = flipped_view;
        return true;
      } catch (const Error& e) {
        if (decode_error.empty()) decode_error = e.what();
        return false;
      }
    };

    if (fd.confidence >= 0.6) {
      decoded_ok = says_flipped ? try_decode(flip_vertical(mask), true) : try_decode(mask, false);
    } else {
      // Low confidence: try upright first, then the mirrored view.
      decoded_ok = try_decode(mask, false) || try_decode(flip_vertical(mask), true);
    }
  } catch (const Error& e) {
    decode_error = e.what();
  }
  if (!decoded_ok) {
    report.failure = "DecodeFail: " + (decode_error.empty() ? "undecodable mask" : decode_error);
    if (save) {
      write_png((scene_dir / "patch.png").string(), patch);
      write_mask_png((scene_dir / "mask.png").string(), mask);
    }
    return report;
  }
  report.completed = Stage::decode;
  report.code = decoded.code;
  report.heights = decoded.heights;
  report.segmentation_confidence = segmentation_confidence(decoded.mask);

  if (report.flip_applied) patch = flip_vertical(patch);
  if (artifacts) {
    artifacts->patch = patch;
    artifacts->mask = decoded.mask;
  }
  if (save) {
    write_png((scene_dir / "patch.png").string(), patch);
    write_mask_png((scene_dir / "mask.png").string(), decoded.mask);
    write_mask_png((scene_dir / ("mask_" + std::to_string(config.mask_size) + ".png")).string(),
                   downsample_nearest(decoded.mask, config.mask_size));
  }

  // Ground-truth comparison when available.
  if (input.gt_mask) {
    try {
      BitMask gt = *input.gt_mask;
      if (!gt.keypoints && input.annotation) gt.keypoints = input.annotation->mask_keypoints;
      report.mpe = max_pin_error(decoded.mask, gt, spec);
      report.mean_pin_error = mean_pin_error(decoded.mask, gt, spec);
    } catch (const Error&) {
      // leave the comparison fields empty
    }
  }

  // (5) MACS.
  try {
    const MacsReport macs = validate_macs(decoded.code, spec);
    report.macs_valid = macs.valid;
    if (!macs.valid) {
      report.failure = "MacsFail: adjacent cut difference exceeds " + std::to_string(spec.macs);
      return report;
    }
  } catch (const Error& e) {
    report.failure = std::string("MacsFail: ") + e.what();
    return report;
  }
  report.completed = Stage::macs;

  // (6) model.
  try {
    const auto boundary = extract_boundary(decoded.mask);
    const HeightProfile profile =
        bitting_height_profile(boundary, decoded.keypoints, spec, config.stations);
    TriMesh mesh = build_blade_mesh(spec, profile, config.stations, config.ring);
    mesh = attach_bow(mesh, BowSpec::default_bow(), spec);
    if (save) {
      const fs::path stl = scene_dir / "key.stl";
      write_stl(mesh, stl.string());
      report.stl_path = stl.string();

      nlohmann::ordered_json pj;
      auto& knots = pj["knots"] = nlohmann::ordered_json::array();
      for (const auto& k : profile.knots) knots.push_back({k.x, k.h});
      std::ofstream pf(scene_dir / "profile.json");
      pf << pj.dump();
    }
  } catch (const Error& e) {
    report.failure = std::string("MeshFail: ") + e.what();
    return report;
  }
  report.completed = Stage::done;

  report.pass = report.macs_valid && (!report.mpe || *report.mpe <= config.mpe_gate) &&
                (!save || !report.stl_path.empty());
  if (save) {
    std::ofstream rf(scene_dir / "report.json");
    rf << report.to_json() << "\n";
  }
  return report;
}

EvalResult eval_dataset(const std::string& manifest_path, const PipelineConfig& config,
                        const EvalArrangement& arrangement) {
  config.validate();
  auto [gen_opt, annotations] = read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);

  std::vector<KeyReport> reports;
  std::vector<double> flip_scores;
  std::vector<bool> flip_labels;
  std::vector<Detection> detections;
  std::map<int, std::vector<Box>> gt_boxes;
  std::vector<double> mpes, mean_errors, overlaps;
  std::map<std::string, int> failures;
  int exact = 0;

  for (size_t i = 0; i < annotations.size(); ++i) {
    SceneAnnotation ann = annotations[i];
    RasterImage scene;
    if (arrangement.frame) {
      scene = read_png((base / ann.image_path).string());
    } else {
      std::tie(scene, ann) = regenerate_scene(ann, config.spec, gen_opt, false);
    }
    if (arrangement.augmented) {
      const uint64_t aug_seed = splitmix64(gen_opt.seed ^ (0xa0b0 + i));
      std::tie(scene, ann) = augment(scene, ann, aug_seed);
    }

    PipelineInput input;
    input.scene_id = ann.id;
    input.annotation = ann;
    input.corners = ann.marker_corners;
    BitMask gt = read_mask_png((base / ann.mask_path).string());
    gt.keypoints = ann.mask_keypoints;
    input.gt_mask = gt;

    PipelineArtifacts artifacts;
    KeyReport report = run_pipeline(scene, input, config, &artifacts);
    if (!report.failure.empty()) {
      const auto colon = report.failure.find(':');
      ++failures[report.failure.substr(0, colon)];
    }

    detections.push_back({report.key_box, 1.0, static_cast<int>(i)});
    gt_boxes[static_cast<int>(i)] = {ann.key_box};
    if (report.completed >= Stage::segment) {
      flip_scores.push_back(report.flip_confidence);
      flip_labels.push_back(ann.flip);
    }
    if (report.code && *report.code == ann.code) ++exact;
    if (report.mpe) mpes.push_back(*report.mpe);
    if (report.mean_pin_error) mean_errors.push_back(*report.mean_pin_error);

    // Mask overlap in the patch frame (paper mode). The ground truth is
    // warped through the canonical square, which is upright by definition.
    if (report.completed >= Stage::decode) {
      try {
        const PerspectiveParams t = canvas_to_patch(ann.frame, config.patch_size);
        RasterImage warped =
            warp_image(mask_to_image(gt), t, config.patch_size, config.patch_size);
        overlaps.push_back(
            pixel_overlap(artifacts.mask, image_to_mask(warped), OverlapMode::paper));
      } catch (const Error&) {
      }
    }

    reports.push_back(std::move(report));
  }

  nlohmann::ordered_json out;
  out["manifest"] = manifest_path;
  out["arrangement"] = {{"augmented", arrangement.augmented}, {"frame", arrangement.frame}};
  out["segmenter"] = config.segmenter == Segmenter::threshold ? "threshold" : "mask_file";
  out["detector"] = config.detector == Detector::annotation ? "annotation" : "marker_box";
  out["patch_size"] = config.patch_size;

  auto& scenes = out["scenes"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) scenes.push_back(nlohmann::ordered_json::parse(r.to_json()));

  nlohmann::ordered_json agg;
  try {
    agg["ap"] = average_precision(detections, gt_boxes).ap;
  } catch (const Error&) {
    agg["ap"] = nullptr;
  }
  try {
    agg["auc"] = roc_auc(flip_scores, flip_labels);
  } catch (const Error&) {
    agg["auc"] = nullptr;
  }
  auto mean_of = [](const std::vector<double>& v) -> nlohmann::ordered_json {
    if (v.empty()) return nullptr;
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  };
  agg["mpe_mean"] = mean_of(mpes);
  if (mpes.empty()) {
    agg["mpe_p95"] = nullptr;
  } else {
    std::vector<double> sorted = mpes;
    std::sort(sorted.begin(), sorted.end());
    const size_t idx =
        std::min(sorted.size() - 1,
                 static_cast<size_t>(std::ceil(0.95 * sorted.size())) - 1);
    agg["mpe_p95"] = sorted[idx];
  }
  agg["mean_pin_error"] = mean_of(mean_errors);
  agg["overlap_mean"] = mean_of(overlaps);
  const double rate =
      reports.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(reports.size());
  agg["exact_code_rate"] = rate;
  agg["scenes"] = reports.size();
  nlohmann::ordered_json fail_json = nlohmann::ordered_json::object();
  for (const auto& [k, v] : failures) fail_json[k] = v;
  agg["failures"] = fail_json;
  out["aggregate"] = agg;

  EvalResult result;
  result.report_json = out.dump(2) + "\n";
  result.scenes = static_cast<int>(reports.size());
  result.exact_codes = exact;
  result.exact_code_rate = rate;

  if (!config.out_dir.empty()) {
    std::ofstream rf(fs::path(config.out_dir) / "report.json");
    if (!rf) throw IoFailure("cannot write eval report");
    rf << result.report_json;
  }
  return result;
}

}  // namespace keyforge
