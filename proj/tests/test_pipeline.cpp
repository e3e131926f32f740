#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "keyforge/errors.hpp"
#include "keyforge/pipeline.hpp"
#include "support.hpp"

using namespace keyforge;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct SmallDataset {
  kftest::TempDir dir{"pipe"};
  KeySpec spec = KeySpec::default_spec();
  GenerateOptions opt;
  std::vector<SceneAnnotation> anns;

  explicit SmallDataset(int count, uint64_t seed = 5150) {
    opt.count = count;
    opt.seed = seed;
    opt.px_per_mm = 5.0;
    opt.scene_width = opt.scene_height = 560;
    anns = generate_dataset(dir.str(), spec, opt);
  }

  PipelineConfig config(const std::string& out_tag) const {
    PipelineConfig cfg;
    cfg.spec = spec;
    cfg.patch_size = 512;
    cfg.stations = 96;
    cfg.ring = 32;
    cfg.out_dir = dir.str(out_tag);
    return cfg;
  }

  PipelineInput input_for(const SceneAnnotation& ann) const {
    PipelineInput in;
    in.scene_id = ann.id;
    in.annotation = ann;
    in.corners = ann.marker_corners;
    BitMask gt = read_mask_png(dir.str(ann.mask_path));
    gt.keypoints = ann.mask_keypoints;
    in.gt_mask = gt;
    return in;
  }
};

}  // namespace

TEST_CASE("run_pipeline decodes a synthetic scene end to end") {
  SmallDataset data(1);
  const SceneAnnotation& ann = data.anns[0];
  const RasterImage scene = read_png(data.dir.str(ann.image_path));

  for (const Detector det : {Detector::annotation, Detector::marker_box}) {
    PipelineConfig cfg = data.config(det == Detector::annotation ? "out_ann" : "out_mark");
    cfg.detector = det;

    const KeyReport report = run_pipeline(scene, data.input_for(ann), cfg);
    REQUIRE(report.failure.empty());
    CHECK(report.completed == Stage::done);
    REQUIRE(report.code.has_value());
    CHECK(*report.code == ann.code);
    CHECK(report.macs_valid);
    REQUIRE(report.mpe.has_value());
    CHECK(*report.mpe <= cfg.mpe_gate);
    CHECK(report.pass);

    // audit artifacts for every completed stage
    const fs::path out = fs::path(cfg.out_dir) / ann.id;
    for (const char* name : {"patch.png", "mask.png", "mask_56.png", "key.stl",
                             "profile.json", "report.json"})
      CHECK(fs::exists(out / name));

    const MeshDiagnostics d = mesh_diagnostics(read_stl(report.stl_path));
    CHECK(d.watertight);
    CHECK(d.shells == 2);
  }
}

TEST_CASE("run_pipeline stage failures") {
  SmallDataset data(1);
  const SceneAnnotation& ann = data.anns[0];
  const RasterImage scene = read_png(data.dir.str(ann.image_path));

  SUBCASE("no detector input") {
    PipelineConfig cfg = data.config("out_nodetect");
    PipelineInput in;
    in.scene_id = "nothing";
    const KeyReport r = run_pipeline(scene, in, cfg);
    CHECK(r.failure.substr(0, 10) == "DetectFail");
    CHECK(r.stl_path.empty());
  }

  SUBCASE("background-only scene fails before any STL is written") {
    PipelineConfig cfg = data.config("out_bg");
    const RasterImage empty_scene = make_background(560, 560, 3, 9);
    const KeyReport r = run_pipeline(empty_scene, data.input_for(ann), cfg);
    CHECK_FALSE(r.failure.empty());
    CHECK((r.failure.substr(0, 11) == "SegmentFail" || r.failure.substr(0, 10) == "DecodeFail" ||
           r.failure.substr(0, 8) == "MacsFail"));
    CHECK(r.stl_path.empty());
    CHECK_FALSE(fs::exists(fs::path(cfg.out_dir) / ann.id / "key.stl"));
  }

  SUBCASE("corrupted mask decodes to a MACS violation and writes no STL") {
    // carve the second pin far deeper than MACS allows next to a shallow cut
    BitMask corrupted = read_mask_png(data.dir.str(ann.mask_path));
    corrupted.keypoints = ann.mask_keypoints;
    const double px = ann.px_per_mm;
    const Keypoints kp = ann.mask_keypoints;
    const int baseline = static_cast<int>(kp.shoulder.y);

    // force pin 0 shallow (depth 0) and pin 1 absurdly deep
    auto carve = [&](double pin_mm, double keep_mm) {
      const int col0 = static_cast<int>(kp.shoulder.x + (pin_mm - 1.0) * px);
      const int col1 = static_cast<int>(kp.shoulder.x + (pin_mm + 1.0) * px);
      const int keep_rows = static_cast<int>(keep_mm * px);
      for (int x = col0; x <= col1; ++x)
        for (int y = 0; y <= baseline - keep_rows; ++y) corrupted.set(x, y, false);
    };
    carve(data.spec.pin_positions_mm[0], data.spec.depth_chart.depth_height_mm(0));
    carve(data.spec.pin_positions_mm[1], data.spec.depth_chart.depth_height_mm(9) - 1.0);

    PipelineConfig cfg = data.config("out_macs");
    cfg.segmenter = Segmenter::mask_file;
    PipelineInput in = data.input_for(ann);
    in.gt_mask = corrupted;

    const KeyReport r = run_pipeline(scene, in, cfg);
    CHECK(r.failure.substr(0, 8) == "MacsFail");
    CHECK_FALSE(r.macs_valid);
    CHECK(r.stl_path.empty());
    CHECK_FALSE(fs::exists(fs::path(cfg.out_dir) / ann.id / "key.stl"));
  }
}

TEST_CASE("config validation") {
  PipelineConfig cfg;
  cfg.spec = KeySpec::default_spec();
  cfg.patch_size = 32;
  CHECK_THROWS_AS(cfg.validate(), ConfigInvalid);
  cfg.patch_size = 128;
  cfg.mpe_gate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigInvalid);

  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"segmenter":"nope"})"), ConfigInvalid);
  const PipelineConfig ok = PipelineConfig::from_json(
      R"({"segmenter":"mask_file","detector":"marker_box","patch_size":256,"mpe_gate":0.02})");
  CHECK(ok.segmenter == Segmenter::mask_file);
  CHECK(ok.detector == Detector::marker_box);
  CHECK(ok.patch_size == 256);
  CHECK(ok.mpe_gate == 0.02);
}

TEST_CASE("eval_dataset: clean manifest, arrangements, determinism") {
  SmallDataset data(4);

  SUBCASE("original arrangement decodes everything") {
    PipelineConfig cfg = data.config("eval_orig");
    const EvalResult res =
        eval_dataset(data.dir.str("manifest.jsonl"), cfg, EvalArrangement{false, true});
    CHECK(res.scenes == 4);
    CHECK(res.exact_code_rate == 1.0);

    const auto j = nlohmann::json::parse(res.report_json);
    CHECK(j.at("aggregate").at("ap").get<double>() == 1.0);
    CHECK(j.at("aggregate").at("exact_code_rate").get<double>() == 1.0);
    CHECK(j.at("aggregate").at("mpe_mean").get<double>() < 0.012);
    CHECK(j.at("aggregate").at("overlap_mean").get<double>() > 0.97);
    CHECK(j.at("aggregate").at("auc").is_null());  // all labels upright
    // pass implies macs_valid and gated MPE on every scene record
    for (const auto& s : j.at("scenes")) {
      if (!s.at("pass").get<bool>()) continue;
      CHECK(s.at("macs_valid").get<bool>());
      CHECK(s.at("mpe").get<double>() <= 0.012);
    }
  }

  SUBCASE("augmented and noframe arrangements still decode") {
    PipelineConfig cfg = data.config("eval_aug");
    const EvalResult aug =
        eval_dataset(data.dir.str("manifest.jsonl"), cfg, EvalArrangement{true, true});
    CHECK(aug.exact_code_rate == 1.0);

    PipelineConfig cfg2 = data.config("eval_noframe");
    const EvalResult noframe =
        eval_dataset(data.dir.str("manifest.jsonl"), cfg2, EvalArrangement{false, false});
    CHECK(noframe.exact_code_rate == 1.0);

    // flip AUC becomes meaningful once augmentation mixes both classes
    const auto j = nlohmann::json::parse(aug.report_json);
    if (!j.at("aggregate").at("auc").is_null())
      CHECK(j.at("aggregate").at("auc").get<double>() == 1.0);
  }

  SUBCASE("two identical eval runs are byte-identical") {
    PipelineConfig cfg1 = data.config("eval_d1");
    PipelineConfig cfg2 = data.config("eval_d2");
    const EvalResult r1 =
        eval_dataset(data.dir.str("manifest.jsonl"), cfg1, EvalArrangement{true, true});
    const EvalResult r2 =
        eval_dataset(data.dir.str("manifest.jsonl"), cfg2, EvalArrangement{true, true});
    CHECK(r1.report_json == r2.report_json);
    CHECK(slurp(data.dir.str("eval_d1/report.json")) == slurp(data.dir.str("eval_d2/report.json")));
    CHECK(slurp(data.dir.str("eval_d1/scene_0000/key.stl")) ==
          slurp(data.dir.str("eval_d2/scene_0000/key.stl")));
    CHECK(!slurp(data.dir.str("eval_d1/scene_0000/key.stl")).empty());
  }
}
