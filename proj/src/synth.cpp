#include "keyforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "keyforge/bitting.hpp"
#include "keyforge/errors.hpp"
#include "keyforge/model3d.hpp"

namespace keyforge {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Small deterministic generator; avoids libstdc++ distribution details.
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(splitmix64(seed)) {}

  uint64_t next() {
    state = splitmix64(state);
    return state;
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % static_cast<uint64_t>(hi - lo + 1));
  }
  double normal(double sigma) {
    const double u1 = std::max(uniform(), 1e-12);
    const double u2 = uniform();
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
};

Box bounding_box(const std::array<Vec2, 4>& pts) {
  Box b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Vec2& p : pts) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  }
  return b;
}

void fill_quad(RasterImage& img, const std::array<Vec2, 4>& quad, const float* color) {
  std::vector<Vec2> poly(quad.begin(), quad.end());
  if (polygon_area(poly) < 0) std::reverse(poly.begin(), poly.end());
  const Box b = bounding_box(quad);
  const int x0 = std::max(0, static_cast<int>(std::floor(b.x0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.y0)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(b.x1)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(b.y1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (point_in_polygon(poly, {static_cast<double>(x), static_cast<double>(y)}))
        for (int c = 0; c < img.channels; ++c) img.at(x, y, c) = color[c % 3];
}

FrameSquare frame_for_mask(const BitMask& mask) {
  const double side = std::max(mask.width, mask.height);
  FrameSquare f;
  f.center = {(mask.width - 1) / 2.0, (mask.height - 1) / 2.0};
  f.half = side / 2.0 + 0.08 * side;
  return f;
}

}  // namespace

BittingCode random_macs_valid_code(const KeySpec& spec, uint64_t seed) {
  Rng rng(splitmix64(seed) ^ 0xc0debeefULL);
  BittingCode code;
  const int max_depth = spec.depth_chart.num_depths - 1;
  int d = rng.uniform_int(0, max_depth);
  code.depths.push_back(d);
  for (int i = 1; i < spec.pin_count(); ++i) {
    const int lo = std::max(0, d - spec.macs);
    const int hi = std::min(max_depth, d + spec.macs);
    d = rng.uniform_int(lo, hi);
    code.depths.push_back(d);
  }
  return code;
}

BitMask render_key_mask(const BittingCode& code, const KeySpec& spec, double px_per_mm,
                        const RenderOptions& opt) {
  if (px_per_mm <= 0) throw SpecInvalid("px_per_mm must be positive");
  const MacsReport macs = validate_macs(code, spec);
  if (!macs.valid)
    throw MacsViolation("code " + code.to_string() + " violates MACS " +
                        std::to_string(spec.macs));

  const HeightProfile profile = HeightProfile::from_code(code, spec, opt.root_width_mm);

  const double H = spec.blade_height_mm;
  const double L = spec.blade_length_mm;
  const int m = opt.margin_px;
  const int width = m + static_cast<int>(std::lround((opt.bow_width_mm + L) * px_per_mm)) + m;
  const int bow_top_px = static_cast<int>(std::lround(opt.bow_top_frac * H * px_per_mm));
  const int bow_bot_px = static_cast<int>(std::lround(opt.bow_bottom_frac * H * px_per_mm));
  const int height = m + bow_top_px + m;
  const int baseline = height - 1 - m;

  BitMask mask = BitMask::zeros(width, height);
  for (int c = 0; c < width; ++c) {
    const double x_mm = (c - m + 0.5) / px_per_mm - opt.bow_width_mm;
    int lo_row = -1, hi_row = -1;  // inclusive fill range
    if (x_mm >= -opt.bow_width_mm && x_mm < 0.0) {
      lo_row = baseline - bow_top_px + 1;
      hi_row = baseline - bow_bot_px;
    } else if (x_mm >= 0.0 && x_mm < L) {
      const int rows = static_cast<int>(std::lround(profile.value(x_mm) * px_per_mm));
      lo_row = baseline - rows + 1;
      hi_row = baseline;
    }
    for (int r = std::max(0, lo_row); r <= hi_row && r < height; ++r) mask.set(c, r, true);
  }

  Keypoints kp;
  kp.shoulder = {m + opt.bow_width_mm * px_per_mm - 0.5, static_cast<double>(baseline)};
  kp.tip = {kp.shoulder.x + L * px_per_mm, static_cast<double>(baseline)};
  mask.keypoints = kp;
  return mask;
}

RasterImage make_background(int width, int height, int channels, uint64_t seed) {
  Rng rng(seed ^ 0xba5e00ULL);
  const double f1 = rng.uniform(1.0, 3.0), f2 = rng.uniform(1.0, 3.0);
  const double p1 = rng.uniform(0.0, 2.0 * M_PI), p2 = rng.uniform(0.0, 2.0 * M_PI);
  const double base = rng.uniform(0.18, 0.30);

  RasterImage img = RasterImage::zeros(width, height, channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double wave = 0.05 * std::sin(2.0 * M_PI * f1 * x / width + p1) *
                          std::sin(2.0 * M_PI * f2 * y / height + p2);
      const double noise = rng.normal(0.02);
      for (int c = 0; c < channels; ++c) {
        const double tint = channels == 3 ? 0.012 * c : 0.0;
        img.at(x, y, c) = static_cast<float>(std::clamp(base + wave + noise + tint, 0.0, 1.0));
      }
    }
  return img;
}

std::pair<RasterImage, SceneAnnotation> compose_scene(const BitMask& mask,
                                                      const RasterImage& background,
                                                      const PerspectiveParams& theta, bool frame,
                                                      uint64_t seed) {
  Rng rng(seed ^ 0x5ce11eULL);

  // Shaded key layer in canvas (= mask raster) coordinates.
  const float tone[3] = {0.82f, 0.74f, 0.48f};
  RasterImage key_layer = RasterImage::zeros(mask.width, mask.height, background.channels);
  RasterImage alpha_layer = RasterImage::zeros(mask.width, mask.height, 1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      alpha_layer.at(x, y, 0) = 1.0f;
      const double shade = 1.0 - 0.08 * y / mask.height + rng.normal(0.02);
      for (int c = 0; c < background.channels; ++c) {
        const float t = background.channels == 3 ? tone[c] : 0.8f;
        key_layer.at(x, y, c) = static_cast<float>(std::clamp(t * shade, 0.0, 1.0));
      }
    }

  const PerspectiveParams theta_inv = invert(theta);
  RasterImage key_scene = warp_image(key_layer, theta_inv, background.width, background.height);
  RasterImage alpha_scene =
      warp_image(alpha_layer, theta_inv, background.width, background.height);

  RasterImage scene = background;
  int bx0 = scene.width, by0 = scene.height, bx1 = -1, by1 = -1;
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const float a = alpha_scene.at(x, y, 0);
      if (a <= 0.0f) continue;
      for (int c = 0; c < scene.channels; ++c)
        scene.at(x, y, c) = (1.0f - a) * scene.at(x, y, c) + a * key_scene.at(x, y, c);
      bx0 = std::min(bx0, x);
      by0 = std::min(by0, y);
      bx1 = std::max(bx1, x);
      by1 = std::max(by1, y);
    }
  if (bx1 < 0) throw KeyOutOfFrame("warped key has no scene coverage");

  // Reject keys whose silhouette leaves the scene.
  int fx0 = mask.width, fy0 = mask.height, fx1 = -1, fy1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        fx0 = std::min(fx0, x);
        fy0 = std::min(fy0, y);
        fx1 = std::max(fx1, x);
        fy1 = std::max(fy1, y);
      }
  for (const Vec2 corner : {Vec2{double(fx0), double(fy0)}, Vec2{double(fx1), double(fy0)},
                            Vec2{double(fx1), double(fy1)}, Vec2{double(fx0), double(fy1)}}) {
    const Vec2 p = apply_homography(theta_inv, corner);
    if (p.x < 0 || p.x > scene.width - 1 || p.y < 0 || p.y > scene.height - 1)
      throw KeyOutOfFrame("warped key silhouette leaves the background");
  }

  SceneAnnotation ann;
  ann.key_box = {static_cast<double>(bx0), static_cast<double>(by0), static_cast<double>(bx1),
                 static_cast<double>(by1)};
  ann.theta = theta;
  ann.flip = false;
  ann.frame = frame_for_mask(mask);
  if (mask.keypoints) ann.mask_keypoints = *mask.keypoints;
  ann.seed = seed;

  if (frame) {
    const auto canonical = ann.frame.corners();
    std::array<Vec2, 4> scene_corners;
    const double msize = 0.30 * (ann.frame.half * 2.0 * 0.08);  // vs frame band width
    for (int i = 0; i < 4; ++i) {
      scene_corners[i] = apply_homography(theta_inv, canonical[i]);
      auto marker_quad = [&](double s) {
        const Vec2 c = canonical[i];
        return std::array<Vec2, 4>{apply_homography(theta_inv, {c.x - s, c.y - s}),
                                   apply_homography(theta_inv, {c.x + s, c.y - s}),
                                   apply_homography(theta_inv, {c.x + s, c.y + s}),
                                   apply_homography(theta_inv, {c.x - s, c.y + s})};
      };
      const float black[3] = {0.03f, 0.03f, 0.03f};
      const float white[3] = {0.97f, 0.97f, 0.97f};
      fill_quad(scene, marker_quad(msize), black);
      fill_quad(scene, marker_quad(msize * 0.62), white);
    }
    ann.marker_corners = scene_corners;
  }

  return {std::move(scene), std::move(ann)};
}

std::pair<RasterImage, SceneAnnotation> augment(const RasterImage& img,
                                                const SceneAnnotation& ann,
                                                const AugmentParams& params) {
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;

  // B maps augmented-scene coordinates back to original-scene coordinates.
  PerspectiveParams b;
  b.theta = {1.0 / params.scale, 0.0, cx - (cx + params.shift_x) / params.scale,
             0.0, 1.0 / params.scale, cy - (cy + params.shift_y) / params.scale,
             0.0, 0.0};

  PerspectiveParams back = b;
  if (params.flip) {
    PerspectiveParams mirror{{-1, 0, static_cast<double>(img.width - 1), 0, 1, 0, 0, 0}};
    back = compose(b, mirror);
  }

  PerspectiveParams theta_new = compose(ann.theta, back);
  if (params.flip) {
    // Keep theta orientation-preserving: fold the mirror into a canvas row
    // mirror about the frame center and record it in the flip flag.
    PerspectiveParams vmirror{{1, 0, 0, 0, -1, 2.0 * ann.frame.center.y, 0, 0}};
    theta_new = compose(vmirror, theta_new);
  }

  SceneAnnotation out = ann;
  out.theta = theta_new;
  out.flip = ann.flip != params.flip;

  const PerspectiveParams fwd = invert(back);  // old -> new scene coords
  const std::array<Vec2, 4> box_corners{Vec2{ann.key_box.x0, ann.key_box.y0},
                                        Vec2{ann.key_box.x1, ann.key_box.y0},
                                        Vec2{ann.key_box.x1, ann.key_box.y1},
                                        Vec2{ann.key_box.x0, ann.key_box.y1}};
  std::array<Vec2, 4> mapped;
  for (int i = 0; i < 4; ++i) mapped[i] = apply_homography(fwd, box_corners[i]);
  out.key_box = bounding_box(mapped);

  if (out.key_box.x0 < 0 || out.key_box.y0 < 0 || out.key_box.x1 > img.width - 1 ||
      out.key_box.y1 > img.height - 1)
    throw AugmentationClipsKey("augmented key box leaves the frame");

  if (ann.marker_corners) {
    std::array<Vec2, 4> corners;
    for (int i = 0; i < 4; ++i) corners[i] = apply_homography(fwd, (*ann.marker_corners)[i]);
    out.marker_corners = corners;
  }

  RasterImage warped = warp_image(img, invert(back), img.width, img.height);
  return {std::move(warped), std::move(out)};
}

std::pair<RasterImage, SceneAnnotation> augment(const RasterImage& img,
                                                const SceneAnnotation& ann, uint64_t seed) {
  Rng rng(seed ^ 0xa06e47ULL);
  for (int attempt = 0; attempt < 10; ++attempt) {
    AugmentParams p;
    p.scale = rng.uniform(0.85, 1.15);
    p.shift_x = rng.uniform(-0.04, 0.04) * img.width;
    p.shift_y = rng.uniform(-0.04, 0.04) * img.height;
    p.flip = rng.uniform() < 0.5;
    try {
      return augment(img, ann, p);
    } catch (const AugmentationClipsKey&) {
      continue;
    }
  }
  throw AugmentationClipsKey("no augmentation kept the key in frame after 10 draws");
}

PerspectiveParams random_scene_theta(const FrameSquare& canvas_frame, int scene_w, int scene_h,
                                     uint64_t seed) {
  Rng rng(seed ^ 0x7e7aULL);
  const double side = 2.0 * canvas_frame.half;
  const double fit = 0.92 * std::min(scene_w, scene_h) / side;
  const double scale = fit * rng.uniform(0.88, 1.0);
  const double angle = rng.uniform(-0.21, 0.21);  // ~±12 degrees
  const Vec2 target{scene_w / 2.0 + rng.uniform(-0.03, 0.03) * scene_w,
                    scene_h / 2.0 + rng.uniform(-0.03, 0.03) * scene_h};

  const auto canonical = canvas_frame.corners();
  std::array<Vec2, 4> scene_quad;
  for (int i = 0; i < 4; ++i) {
    const double dx = canonical[i].x - canvas_frame.center.x;
    const double dy = canonical[i].y - canvas_frame.center.y;
    Vec2 p{target.x + scale * (dx * std::cos(angle) - dy * std::sin(angle)),
           target.y + scale * (dx * std::sin(angle) + dy * std::cos(angle))};
    // perspective jitter
    p.x += rng.uniform(-0.015, 0.015) * side * scale;
    p.y += rng.uniform(-0.015, 0.015) * side * scale;
    scene_quad[i] = p;
  }
  return homography_from_correspondences(scene_quad, canonical);
}

std::string annotation_to_json(const SceneAnnotation& ann) {
  nlohmann::ordered_json j;
  j["id"] = ann.id;
  j["image"] = ann.image_path;
  j["mask"] = ann.mask_path;
  j["box"] = {ann.key_box.x0, ann.key_box.y0, ann.key_box.x1, ann.key_box.y1};
  j["theta"] = ann.theta.theta;
  j["flip"] = ann.flip;
  j["code"] = ann.code.to_string();
  if (ann.marker_corners) {
    auto& c = j["corners"] = nlohmann::ordered_json::array();
    for (const Vec2& p : *ann.marker_corners) c.push_back({p.x, p.y});
  } else {
    j["corners"] = nullptr;
  }
  j["frame"] = {{"cx", ann.frame.center.x}, {"cy", ann.frame.center.y}, {"half", ann.frame.half}};
  j["keypoints"] = {{"shoulder", {ann.mask_keypoints.shoulder.x, ann.mask_keypoints.shoulder.y}},
                    {"tip", {ann.mask_keypoints.tip.x, ann.mask_keypoints.tip.y}}};
  j["seed"] = ann.seed;
  j["px_per_mm"] = ann.px_per_mm;
  return j.dump();
}

SceneAnnotation annotation_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  SceneAnnotation ann;
  ann.id = j.at("id").get<std::string>();
  ann.image_path = j.at("image").get<std::string>();
  ann.mask_path = j.at("mask").get<std::string>();
  const auto& box = j.at("box");
  ann.key_box = {box.at(0).get<double>(), box.at(1).get<double>(), box.at(2).get<double>(),
                 box.at(3).get<double>()};
  const auto& theta = j.at("theta");
  for (int i = 0; i < 8; ++i) ann.theta.theta[i] = theta.at(i).get<double>();
  ann.flip = j.at("flip").get<bool>();
  ann.code = BittingCode::parse(j.at("code").get<std::string>());
  if (!j.at("corners").is_null()) {
    std::array<Vec2, 4> corners;
    for (int i = 0; i < 4; ++i)
      corners[i] = {j.at("corners").at(i).at(0).get<double>(),
                    j.at("corners").at(i).at(1).get<double>()};
    ann.marker_corners = corners;
  }
  ann.frame.center = {j.at("frame").at("cx").get<double>(), j.at("frame").at("cy").get<double>()};
  ann.frame.half = j.at("frame").at("half").get<double>();
  ann.mask_keypoints.shoulder = {j.at("keypoints").at("shoulder").at(0).get<double>(),
                                 j.at("keypoints").at("shoulder").at(1).get<double>()};
  ann.mask_keypoints.tip = {j.at("keypoints").at("tip").at(0).get<double>(),
                            j.at("keypoints").at("tip").at(1).get<double>()};
  ann.seed = j.at("seed").get<uint64_t>();
  ann.px_per_mm = j.at("px_per_mm").get<double>();
  return ann;
}

void write_manifest(const std::string& path, const GenerateOptions& opt,
                    const std::vector<SceneAnnotation>& annotations) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  nlohmann::ordered_json header;
  header["type"] = "keyforge-manifest";
  header["version"] = 1;
  header["seed"] = opt.seed;
  header["count"] = annotations.size();
  header["px_per_mm"] = opt.px_per_mm;
  header["scene"] = {opt.scene_width, opt.scene_height};
  header["channels"] = opt.channels;
  header["frame"] = opt.frame;
  out << header.dump() << "\n";
  for (const auto& ann : annotations) out << annotation_to_json(ann) << "\n";
  if (!out) throw IoFailure("short write to " + path);
}

std::pair<GenerateOptions, std::vector<SceneAnnotation>> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open manifest " + path);

  std::string line;
  long line_no = 0;
  GenerateOptions opt;
  std::vector<SceneAnnotation> anns;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      if (line_no == 1) {
        const auto header = nlohmann::json::parse(line);
        if (header.value("type", std::string()) != "keyforge-manifest")
          throw ManifestParse(line_no, "missing keyforge-manifest header");
        opt.seed = header.at("seed").get<uint64_t>();
        opt.px_per_mm = header.at("px_per_mm").get<double>();
        opt.scene_width = header.at("scene").at(0).get<int>();
        opt.scene_height = header.at("scene").at(1).get<int>();
        opt.channels = header.value("channels", 3);
        opt.frame = header.at("frame").get<bool>();
      } else {
        anns.push_back(annotation_from_json(line));
      }
    } catch (const ManifestParse&) {
      throw;
    } catch (const std::exception& e) {
      throw ManifestParse(line_no, e.what());
    }
  }
  if (line_no == 0) throw ManifestParse(0, "empty manifest");
  if (anns.empty()) throw EmptyDataset("manifest lists no scenes");
  opt.count = static_cast<int>(anns.size());
  return {opt, anns};
}

std::pair<RasterImage, SceneAnnotation> regenerate_scene(const SceneAnnotation& ann,
                                                         const KeySpec& spec,
                                                         const GenerateOptions& opt, bool frame) {
  const BitMask mask = render_key_mask(ann.code, spec, ann.px_per_mm);
  const RasterImage background =
      make_background(opt.scene_width, opt.scene_height, opt.channels, ann.seed ^ 0x02);
  auto [scene, fresh] = compose_scene(mask, background, ann.theta, frame, ann.seed ^ 0x03);
  fresh.id = ann.id;
  fresh.image_path = ann.image_path;
  fresh.mask_path = ann.mask_path;
  fresh.code = ann.code;
  fresh.px_per_mm = ann.px_per_mm;
  fresh.seed = ann.seed;
  return {std::move(scene), std::move(fresh)};
}

std::vector<SceneAnnotation> generate_dataset(const std::string& dir, const KeySpec& spec,
                                              const GenerateOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scenes");
  fs::create_directories(fs::path(dir) / "masks");

  std::vector<SceneAnnotation> annotations;
  annotations.reserve(opt.count);
  for (int i = 0; i < opt.count; ++i) {
    const uint64_t scene_seed = splitmix64(opt.seed ^ (0x1000 + static_cast<uint64_t>(i)));
    const BittingCode code = random_macs_valid_code(spec, scene_seed ^ 0x01);
    const BitMask mask = render_key_mask(code, spec, opt.px_per_mm);
    const RasterImage background =
        make_background(opt.scene_width, opt.scene_height, opt.channels, scene_seed ^ 0x02);

    const FrameSquare frame = frame_for_mask(mask);
    RasterImage scene;
    SceneAnnotation ann;
    bool placed = false;
    for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
      const PerspectiveParams theta = random_scene_theta(
          frame, opt.scene_width, opt.scene_height, scene_seed ^ (0x100 + attempt));
      try {
        std::tie(scene, ann) = compose_scene(mask, background, theta, opt.frame, scene_seed ^ 0x03);
      } catch (const KeyOutOfFrame&) {
        continue;
      }
      if (ann.key_box.height() < opt.min_key_px) continue;
      placed = true;
    }
    if (!placed) throw KeyOutOfFrame("could not place scene " + std::to_string(i));

    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", i);
    ann.id = name;
    ann.image_path = std::string("scenes/") + name + ".png";
    ann.mask_path = std::string("masks/") + name + ".png";
    ann.code = code;
    ann.px_per_mm = opt.px_per_mm;
    ann.seed = scene_seed;

    write_png((fs::path(dir) / ann.image_path).string(), scene);
    write_mask_png((fs::path(dir) / ann.mask_path).string(), mask);
    annotations.push_back(ann);
  }

  write_manifest((fs::path(dir) / "manifest.jsonl").string(), opt, annotations);
  return annotations;
}

}  // namespace keyforge
