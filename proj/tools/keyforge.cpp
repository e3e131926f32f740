// keyforge command line: synthetic scenes, rectification, segmentation,
// bitting decode, 3D model output and dataset evaluation.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "keyforge/bitting.hpp"
#include "keyforge/errors.hpp"
#include "keyforge/geometry.hpp"
#include "keyforge/image.hpp"
#include "keyforge/keyspec.hpp"
#include "keyforge/model3d.hpp"
#include "keyforge/pipeline.hpp"
#include "keyforge/synth.hpp"

namespace fs = std::filesystem;
using namespace keyforge;

namespace {

KeySpec load_spec(const std::string& path) {
  if (path.empty()) return KeySpec::default_spec();
  return KeySpec::load(path);
}

std::array<Vec2, 4> parse_corners(const std::string& text) {
  std::array<Vec2, 4> corners;
  std::istringstream in(text);
  std::string tok;
  std::vector<double> vals;
  while (std::getline(in, tok, ',')) vals.push_back(std::stod(tok));
  if (vals.size() != 8)
    throw SpecInvalid("--corners needs 8 comma-separated values x0,y0,...,x3,y3");
  for (int i = 0; i < 4; ++i) corners[i] = {vals[2 * i], vals[2 * i + 1]};
  return corners;
}

PerspectiveParams parse_theta(const std::string& text) {
  PerspectiveParams p;
  std::istringstream in(text);
  std::string tok;
  std::vector<double> vals;
  while (std::getline(in, tok, ',')) vals.push_back(std::stod(tok));
  if (vals.size() != 8) throw SpecInvalid("--theta needs 8 comma-separated values");
  for (int i = 0; i < 8; ++i) p.theta[i] = vals[i];
  return p;
}

int cmd_synth(const std::string& out, const std::string& keyspec, int count, uint64_t seed,
              double px_per_mm, int scene_size, bool noframe, double min_key_px) {
  const KeySpec spec = load_spec(keyspec);
  GenerateOptions opt;
  opt.count = count;
  opt.seed = seed;
  opt.px_per_mm = px_per_mm;
  opt.scene_width = scene_size;
  opt.scene_height = scene_size;
  opt.frame = !noframe;
  opt.min_key_px = min_key_px;
  const auto annotations = generate_dataset(out, spec, opt);
  std::cout << "wrote " << annotations.size() << " scenes under " << out << "\n";
  return 0;
}

int cmd_rectify(const std::string& image, const std::string& corners_text,
                const std::string& theta_text, int patch_size, const std::string& out) {
  const RasterImage scene = read_png(image);
  PerspectiveParams theta;
  if (!corners_text.empty()) {
    const auto corners = parse_corners(corners_text);
    const double d = patch_size - 1;
    theta = homography_from_correspondences(
        corners, {Vec2{0, 0}, Vec2{d, 0}, Vec2{d, d}, Vec2{0, d}});
  } else if (!theta_text.empty()) {
    theta = parse_theta(theta_text);
  } else {
    std::cerr << "rectify: either --corners or --theta is required\n";
    return 2;
  }
  write_png(out, warp_image(scene, theta, patch_size, patch_size));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_segment(const std::string& image, const std::string& out) {
  const RasterImage patch = read_png(image);
  write_mask_png(out, segment_threshold(patch));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_decode(const std::string& mask_path, const std::string& keyspec,
               const std::string& report_path) {
  const KeySpec spec = load_spec(keyspec);
  BitMask mask = read_mask_png(mask_path);

  const FlipDecision fd = detect_flip_heuristic(mask);
  if (fd.orientation == Orientation::flipped && fd.confidence >= 0.6)
    mask = flip_vertical(mask);
  mask.keypoints = locate_keypoints(mask);

  const auto heights = cast_virtual_pins(mask, spec);
  const BittingCode code = heights_to_code(heights, spec);
  const MacsReport macs = validate_macs(code, spec);

  std::cout << code.to_string() << "\n";
  if (!macs.valid) {
    std::cerr << "warning: decoded code violates MACS " << spec.macs << "\n";
  }
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << "{\"code\":\"" << code.to_string() << "\",\"macs_valid\":"
        << (macs.valid ? "true" : "false") << "}\n";
  }
  return macs.valid ? 0 : 1;
}

int cmd_model(const std::string& code_text, const std::string& keyspec, const std::string& out,
              const std::string& csg_out, int stations, int ring) {
  const KeySpec spec = load_spec(keyspec);
  const BittingCode code = BittingCode::parse(code_text);
  const MacsReport macs = validate_macs(code, spec);
  if (!macs.valid) {
    std::cerr << "model: code " << code.to_string() << " violates MACS " << spec.macs << "\n";
    return 1;
  }
  const HeightProfile profile = HeightProfile::from_code(code, spec);
  TriMesh mesh = build_blade_mesh(spec, profile, stations, ring);
  mesh = attach_bow(mesh, BowSpec::default_bow(), spec);
  write_stl(mesh, out);

  const MeshDiagnostics diag = mesh_diagnostics(mesh);
  std::cout << "wrote " << out << ": " << mesh.triangles.size() << " triangles, volume "
            << diag.volume_mm3 << " mm^3, " << (diag.watertight ? "watertight" : "NOT watertight")
            << ", shells " << diag.shells << "\n";
  if (!csg_out.empty()) {
    emit_csg_script(spec, profile, BowSpec::default_bow(), csg_out);
    std::cout << "wrote " << csg_out << "\n";
  }
  return diag.watertight ? 0 : 1;
}

int cmd_pipeline(const std::string& manifest, int index, const std::string& keyspec,
                 const std::string& out_dir, int patch_size, const std::string& detector) {
  PipelineConfig cfg;
  cfg.spec = load_spec(keyspec);
  cfg.patch_size = patch_size;
  cfg.out_dir = out_dir;
  cfg.detector = detector == "marker_box" ? Detector::marker_box : Detector::annotation;

  auto [gen_opt, annotations] = read_manifest(manifest);
  if (index < 0 || index >= static_cast<int>(annotations.size())) {
    std::cerr << "pipeline: index " << index << " outside the manifest\n";
    return 2;
  }
  const SceneAnnotation& ann = annotations[index];
  const fs::path base = fs::path(manifest).parent_path();

  PipelineInput input;
  input.scene_id = ann.id;
  input.annotation = ann;
  input.corners = ann.marker_corners;
  BitMask gt = read_mask_png((base / ann.mask_path).string());
  gt.keypoints = ann.mask_keypoints;
  input.gt_mask = gt;

  const RasterImage scene = read_png((base / ann.image_path).string());
  const KeyReport report = run_pipeline(scene, input, cfg);
  std::cout << report.to_json() << "\n";
  return report.failure.empty() ? 0 : 1;
}

int cmd_eval(const std::string& manifest, const std::string& keyspec, const std::string& out_dir,
             int patch_size, const std::string& detector, const std::string& segmenter,
             bool augmented, bool noframe, int stations, int ring) {
  PipelineConfig cfg;
  cfg.spec = load_spec(keyspec);
  cfg.patch_size = patch_size;
  cfg.out_dir = out_dir;
  cfg.stations = stations;
  cfg.ring = ring;
  cfg.detector = detector == "marker_box" ? Detector::marker_box : Detector::annotation;
  cfg.segmenter = segmenter == "mask_file" ? Segmenter::mask_file : Segmenter::threshold;

  EvalArrangement arr;
  arr.augmented = augmented;
  arr.frame = !noframe;

  const EvalResult result = eval_dataset(manifest, cfg, arr);
  std::cout << "evaluated " << result.scenes << " scenes, exact code rate "
            << result.exact_code_rate << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keyforge: pin tumbler key teleduplication toolkit"};
  app.require_subcommand(1);

  uint64_t seed = 1;
  app.add_option("--seed", seed, "global random seed")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "generate labeled synthetic scenes");
  std::string synth_out = "dataset", synth_spec;
  int synth_count = 10, synth_scene = 768;
  double synth_px = 12.0, synth_min_key = 0.0;
  bool synth_noframe = false;
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--keyspec", synth_spec, "keyspec JSON (default built-in)");
  synth->add_option("--count", synth_count, "number of scenes")->capture_default_str();
  synth->add_option("--px-per-mm", synth_px, "render resolution")->capture_default_str();
  synth->add_option("--scene-size", synth_scene, "scene side in pixels")->capture_default_str();
  synth->add_option("--min-key-px", synth_min_key, "minimum key height in the scene");
  synth->add_flag("--noframe", synth_noframe, "omit the fiducial frame");

  // rectify
  auto* rectify = app.add_subcommand("rectify", "warp a scene to the upright patch");
  std::string rect_image, rect_corners, rect_theta, rect_out = "patch.png";
  int rect_patch = 128;
  rectify->add_option("--image", rect_image, "scene PNG")->required();
  rectify->add_option("--corners", rect_corners, "marker corners x0,y0,...,x3,y3");
  rectify->add_option("--theta", rect_theta, "8 homography parameters");
  rectify->add_option("--patch-size", rect_patch, "patch side")->capture_default_str();
  rectify->add_option("--out", rect_out, "output PNG")->capture_default_str();

  // segment
  auto* segment = app.add_subcommand("segment", "threshold-segment a patch");
  std::string seg_image, seg_out = "mask.png";
  segment->add_option("--image", seg_image, "patch PNG")->required();
  segment->add_option("--out", seg_out, "output mask PNG")->capture_default_str();

  // decode
  auto* decode = app.add_subcommand("decode", "bitting code from a mask");
  std::string dec_mask, dec_spec, dec_report;
  decode->add_option("--mask", dec_mask, "mask PNG")->required();
  decode->add_option("--keyspec", dec_spec, "keyspec JSON (default built-in)");
  decode->add_option("--report", dec_report, "optional JSON report path");

  // model
  auto* model = app.add_subcommand("model", "build a printable STL from a code");
  std::string model_code, model_spec, model_out = "key.stl", model_csg;
  int model_stations = 256, model_ring = 128;
  model->add_option("--code", model_code, "bitting code, e.g. 2-4-0-7-5")->required();
  model->add_option("--keyspec", model_spec, "keyspec JSON (default built-in)");
  model->add_option("--out", model_out, "output STL")->capture_default_str();
  model->add_option("--csg", model_csg, "also emit a CSG script");
  model->add_option("--stations", model_stations, "sweep stations")->capture_default_str();
  model->add_option("--ring", model_ring, "ring vertices per station")->capture_default_str();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "run one manifest scene end to end");
  std::string pipe_manifest, pipe_spec, pipe_out = "pipeline-out", pipe_detector = "annotation";
  int pipe_index = 0, pipe_patch = 1024;
  pipe->add_option("--manifest", pipe_manifest, "manifest.jsonl")->required();
  pipe->add_option("--index", pipe_index, "scene index")->capture_default_str();
  pipe->add_option("--keyspec", pipe_spec, "keyspec JSON (default built-in)");
  pipe->add_option("--out", pipe_out, "artifact directory")->capture_default_str();
  pipe->add_option("--patch-size", pipe_patch, "patch side")->capture_default_str();
  pipe->add_option("--detector", pipe_detector, "annotation | marker_box")
      ->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "run the pipeline over a manifest");
  std::string eval_manifest, eval_spec, eval_out = "eval-out";
  std::string eval_detector = "annotation", eval_segmenter = "threshold";
  int eval_patch = 1024, eval_stations = 96, eval_ring = 64;
  bool eval_augmented = false, eval_noframe = false;
  eval->add_option("--manifest", eval_manifest, "manifest.jsonl")->required();
  eval->add_option("--keyspec", eval_spec, "keyspec JSON (default built-in)");
  eval->add_option("--out", eval_out, "output directory")->capture_default_str();
  eval->add_option("--patch-size", eval_patch, "patch side")->capture_default_str();
  eval->add_option("--detector", eval_detector, "annotation | marker_box")
      ->capture_default_str();
  eval->add_option("--segmenter", eval_segmenter, "threshold | mask_file")
      ->capture_default_str();
  eval->add_flag("--augmented", eval_augmented, "augment every scene");
  eval->add_flag("--noframe", eval_noframe, "regenerate scenes without markers");
  eval->add_option("--stations", eval_stations, "sweep stations")->capture_default_str();
  eval->add_option("--ring", eval_ring, "ring vertices")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_spec, synth_count, seed, synth_px, synth_scene,
                       synth_noframe, synth_min_key);
    if (rectify->parsed())
      return cmd_rectify(rect_image, rect_corners, rect_theta, rect_patch, rect_out);
    if (segment->parsed()) return cmd_segment(seg_image, seg_out);
    if (decode->parsed()) return cmd_decode(dec_mask, dec_spec, dec_report);
    if (model->parsed())
      return cmd_model(model_code, model_spec, model_out, model_csg, model_stations, model_ring);
    if (pipe->parsed())
      return cmd_pipeline(pipe_manifest, pipe_index, pipe_spec, pipe_out, pipe_patch,
                          pipe_detector);
    if (eval->parsed())
      return cmd_eval(eval_manifest, eval_spec, eval_out, eval_patch, eval_detector,
                      eval_segmenter, eval_augmented, eval_noframe, eval_stations, eval_ring);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
