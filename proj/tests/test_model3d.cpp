#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "keyforge/errors.hpp"
#include "keyforge/model3d.hpp"
#include "keyforge/bitting.hpp"
#include "keyforge/synth.hpp"
#include "support.hpp"

using namespace keyforge;

namespace {

// shoelace, written here so the volume oracle is independent of the library
double shoelace(const std::vector<Vec2>& poly) {
  double s = 0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return std::abs(s) / 2.0;
}

TriMesh unit_cube() {
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  m.triangles = {{0, 2, 1}, {0, 3, 2},   // bottom
                 {4, 5, 6}, {4, 6, 7},   // top
                 {0, 1, 5}, {0, 5, 4},   // front
                 {2, 3, 7}, {2, 7, 6},   // back
                 {0, 4, 7}, {0, 7, 3},   // left
                 {1, 2, 6}, {1, 6, 5}};  // right
  return m;
}

KeySpec rect_keyway_spec(double w, double h) {
  KeySpec spec = KeySpec::default_spec();
  spec.keyway = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  spec.blade_height_mm = h;
  spec.depth_chart = DepthChart{10, h * 0.8, h * 0.06};
  return spec;
}

}  // namespace

TEST_CASE("height profile: constant, code envelope, evaluation") {
  const KeySpec spec = KeySpec::default_spec();
  const HeightProfile flat = HeightProfile::constant(5.0, spec.blade_length_mm);
  CHECK(flat.value(-1.0) == 5.0);
  CHECK(flat.value(12.3) == 5.0);
  CHECK(flat.value(99.0) == 5.0);

  const BittingCode code = BittingCode::parse("0-4-9-2-6");
  const HeightProfile p = HeightProfile::from_code(code, spec);
  for (int i = 0; i < spec.pin_count(); ++i) {
    const double want = spec.depth_chart.depth_height_mm(code.depths[i]);
    CHECK(p.value(spec.pin_positions_mm[i]) == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(p.value(0.2) == doctest::Approx(spec.blade_height_mm));  // uncut root
  for (size_t i = 1; i < p.knots.size(); ++i) CHECK(p.knots[i].x > p.knots[i - 1].x);
}

TEST_CASE("bitting_height_profile") {
  const KeySpec spec = KeySpec::default_spec();

  SUBCASE("rectangle mask gives a constant blade-height profile") {
    const double px = 10.0;
    const int w = 340, h = 140;
    BitMask rect = BitMask::zeros(w, h);
    const int baseline = 120;
    const int rows = static_cast<int>(spec.blade_height_mm * px);
    for (int x = 10; x < 10 + int(spec.blade_length_mm * px) + 1; ++x)
      for (int r = baseline - rows + 1; r <= baseline; ++r) rect.set(x, r, true);
    const Keypoints kp{{10.0, double(baseline)}, {10.0 + spec.blade_length_mm * px, double(baseline)}};
    const auto boundary = extract_boundary(rect);
    const HeightProfile prof = bitting_height_profile(boundary, kp, spec, 128);
    for (const auto& k : prof.knots)
      CHECK(k.h == doctest::Approx(spec.blade_height_mm).epsilon(0.02));
  }

  SUBCASE("all-shallowest render sits at shallowest_mm over every pin station") {
    const double px = 12.0;
    const BitMask m = render_key_mask(BittingCode{{0, 0, 0, 0, 0}}, spec, px);
    const auto boundary = extract_boundary(m);
    const HeightProfile prof = bitting_height_profile(boundary, *m.keypoints, spec, 256);
    const double px_equiv = 1.0 / px;
    for (double d : spec.pin_positions_mm)
      CHECK(std::abs(prof.value(d) - spec.depth_chart.shallowest_mm) <= px_equiv + 1e-9);
  }

  SUBCASE("profiles agree across render resolutions within 2 px-equivalent") {
    const BittingCode code = BittingCode::parse("3-7-1-5-8");
    const BitMask lo = render_key_mask(code, spec, 8.0);
    const BitMask hi = render_key_mask(code, spec, 16.0);
    const HeightProfile pl =
        bitting_height_profile(extract_boundary(lo), *lo.keypoints, spec, 128);
    const HeightProfile ph =
        bitting_height_profile(extract_boundary(hi), *hi.keypoints, spec, 128);
    const double tol = 2.0 / 8.0;  // 2 px at the coarser resolution
    for (double x = 0.5; x < spec.blade_length_mm; x += 0.5)
      CHECK(std::abs(pl.value(x) - ph.value(x)) <= tol);
  }

  SUBCASE("degenerate keypoints throw") {
    CHECK_THROWS_AS(
        bitting_height_profile({{1, 1}}, Keypoints{{5, 5}, {5, 9}}, spec, 64),
        DegenerateBlade);
  }
}

TEST_CASE("build_blade_mesh: box case is exact") {
  const KeySpec spec = rect_keyway_spec(2.5, 8.0);
  const HeightProfile prof = HeightProfile::constant(8.0, spec.blade_length_mm);
  const TriMesh mesh = build_blade_mesh(spec, prof, 64, 64);
  const MeshDiagnostics d = mesh_diagnostics(mesh);
  CHECK(d.watertight);
  CHECK(d.shells == 1);
  CHECK(d.euler == 2);
  CHECK(d.degenerate_triangles == 0);
  CHECK(d.volume_mm3 == doctest::Approx(2.5 * 8.0 * spec.blade_length_mm).epsilon(1e-9));
}

TEST_CASE("build_blade_mesh: constant-profile volume matches shoelace x length") {
  const KeySpec spec = KeySpec::default_spec();
  const double h0 = 6.0;
  // keyway below v=6 written out by hand: the ward chamfer at (2.8,4.8)
  // has already rejoined the right edge, so the cut passes the flat wall
  const std::vector<Vec2> clipped{{0, 0},   {2.8, 0},   {2.8, 2.2}, {2.2, 3.0},
                                  {2.2, 4.0}, {2.8, 4.8}, {2.8, 6.0}, {0, 6.0}};
  const double oracle = shoelace(clipped) * spec.blade_length_mm;

  const TriMesh mesh =
      build_blade_mesh(spec, HeightProfile::constant(h0, spec.blade_length_mm), 64, 256);
  const MeshDiagnostics d = mesh_diagnostics(mesh);
  CHECK(d.watertight);
  CHECK(std::abs(d.volume_mm3 - oracle) / oracle < 0.005);
}

TEST_CASE("build_blade_mesh: generated keys are sound and volumes converge") {
  const KeySpec spec = KeySpec::default_spec();
  const BittingCode code = BittingCode::parse("2-4-0-7-5");
  const HeightProfile prof = HeightProfile::from_code(code, spec);

  const TriMesh coarse = build_blade_mesh(spec, prof, 128, 64);
  const MeshDiagnostics dc = mesh_diagnostics(coarse);
  CHECK(dc.watertight);
  CHECK(dc.euler == 2);
  CHECK(dc.volume_mm3 > 0);
  CHECK(dc.degenerate_triangles == 0);

  const TriMesh fine = build_blade_mesh(spec, prof, 256, 128);
  const MeshDiagnostics df = mesh_diagnostics(fine);
  CHECK(std::abs(df.volume_mm3 - dc.volume_mm3) / dc.volume_mm3 < 0.002);
}

TEST_CASE("blade volume is strictly monotone in cut depth") {
  const KeySpec spec = KeySpec::default_spec();
  const BittingCode base = BittingCode::parse("5-5-5-5-5");
  const double v0 =
      mesh_diagnostics(build_blade_mesh(spec, HeightProfile::from_code(base, spec), 192, 64))
          .volume_mm3;
  for (int pin = 0; pin < 5; ++pin) {
    BittingCode deeper = base;
    deeper.depths[pin] += 1;
    const double v = mesh_diagnostics(
                         build_blade_mesh(spec, HeightProfile::from_code(deeper, spec), 192, 64))
                         .volume_mm3;
    CHECK(v < v0);
  }
}

TEST_CASE("build_blade_mesh: clip failures are reported") {
  KeySpec spec = KeySpec::default_spec();

  SUBCASE("two towers above the cut line") {
    spec.keyway = {{0, 0}, {6, 0}, {6, 1}, {5, 1}, {5, 4}, {4, 4},
                   {4, 1}, {2, 1}, {2, 4}, {1, 4}, {1, 1}, {0, 1}};
    CHECK_THROWS_AS(
        build_blade_mesh(spec, HeightProfile::constant(2.0, spec.blade_length_mm), 16, 16),
        ClipNotSimple);
  }
  SUBCASE("cut below the whole section") {
    CHECK_THROWS_AS(
        build_blade_mesh(KeySpec::default_spec(),
                         HeightProfile::constant(-1.0, 30.0), 16, 16),
        ClipNotSimple);
  }
}

TEST_CASE("attach_bow") {
  const KeySpec spec = KeySpec::default_spec();
  const TriMesh blade =
      build_blade_mesh(spec, HeightProfile::constant(8.0, spec.blade_length_mm), 64, 64);
  const double blade_volume = mesh_diagnostics(blade).volume_mm3;

  SUBCASE("two watertight shells with the volume bound") {
    const BowSpec bow = BowSpec::default_bow();
    const TriMesh full = attach_bow(blade, bow, spec);
    const MeshDiagnostics d = mesh_diagnostics(full);
    CHECK(d.shells == 2);
    CHECK(d.watertight);
    CHECK(d.euler == 4);  // 2 per closed shell
    const double bow_volume = shoelace(bow.outline) * bow.thickness_mm;
    CHECK(d.volume_mm3 >= blade_volume + 0.5 * bow_volume);
  }

  SUBCASE("zero overlap refuses to attach") {
    BowSpec bow = BowSpec::default_bow();
    bow.overlap_mm = 0.0;
    CHECK_THROWS_AS(attach_bow(blade, bow, spec), NoOverlap);
  }

  SUBCASE("a bow far from the keyway leaves a gap") {
    BowSpec bow = BowSpec::default_bow();
    for (Vec2& p : bow.outline) p.x += 100.0;
    CHECK_THROWS_AS(attach_bow(blade, bow, spec), NoOverlap);
  }
}

TEST_CASE("binary STL: size arithmetic and float-exact round trip") {
  kftest::TempDir dir("stl");
  const TriMesh cube = unit_cube();
  const std::string path = dir.str("cube.stl");
  write_stl(cube, path);

  CHECK(std::filesystem::file_size(path) == 84 + 12 * 50);

  const TriMesh back = read_stl(path);
  REQUIRE(back.triangles.size() == cube.triangles.size());
  for (size_t t = 0; t < cube.triangles.size(); ++t)
    for (int v = 0; v < 3; ++v) {
      const Vec3 a = cube.vertices[cube.triangles[t][v]];
      const Vec3 b = back.vertices[back.triangles[t][v]];
      CHECK(static_cast<float>(a.x) == static_cast<float>(b.x));
      CHECK(static_cast<float>(a.y) == static_cast<float>(b.y));
      CHECK(static_cast<float>(a.z) == static_cast<float>(b.z));
    }

  // writing the read-back soup reproduces the triangle records bit for bit
  const std::string path2 = dir.str("cube2.stl");
  write_stl(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  CHECK(b1.substr(0, 8) == "keyforge");

  SUBCASE("empty mesh refuses to serialize") {
    CHECK_THROWS_AS(write_stl(TriMesh{}, dir.str("empty.stl")), EmptyMesh);
  }
  SUBCASE("missing file fails") { CHECK_THROWS_AS(read_stl(dir.str("nope.stl")), IoFailure); }
  SUBCASE("truncated file fails") {
    std::ofstream bad(dir.str("bad.stl"), std::ios::binary);
    bad << b1.substr(0, 100);
    bad.close();
    CHECK_THROWS_AS(read_stl(dir.str("bad.stl")), IoFailure);
  }
}

TEST_CASE("mesh diagnostics on the cube family") {
  const TriMesh cube = unit_cube();
  const MeshDiagnostics d = mesh_diagnostics(cube);
  CHECK(d.watertight);
  CHECK(d.volume_mm3 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.euler == 2);
  CHECK(d.shells == 1);
  CHECK(d.degenerate_triangles == 0);

  SUBCASE("removing a face breaks watertightness") {
    TriMesh open = cube;
    open.triangles.pop_back();
    CHECK_FALSE(mesh_diagnostics(open).watertight);
  }
  SUBCASE("inverted winding flips the volume sign") {
    TriMesh inv = cube;
    for (auto& t : inv.triangles) std::swap(t[1], t[2]);
    CHECK(mesh_diagnostics(inv).volume_mm3 == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("degenerate triangles are counted") {
    TriMesh degen = cube;
    degen.triangles.push_back({0, 1, 1});
    degen.triangles.push_back({1, 0, 1});  // keep edge pairing balanced
    CHECK(mesh_diagnostics(degen).degenerate_triangles == 2);
  }
}

TEST_CASE("CSG script: deterministic, one union, one difference") {
  kftest::TempDir dir("csg");
  const KeySpec spec = KeySpec::default_spec();
  const HeightProfile prof = HeightProfile::from_code(BittingCode::parse("2-4-0-7-5"), spec);
  const BowSpec bow = BowSpec::default_bow();

  emit_csg_script(spec, prof, bow, dir.str("a.scad"));
  emit_csg_script(spec, prof, bow, dir.str("b.scad"));

  auto slurp = [](const std::string& p) {
    std::ifstream f(p);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  const std::string a = slurp(dir.str("a.scad"));
  CHECK(a == slurp(dir.str("b.scad")));

  auto count = [&](const std::string& needle) {
    size_t n = 0, pos = 0;
    while ((pos = a.find(needle, pos)) != std::string::npos) {
      ++n;
      pos += needle.size();
    }
    return n;
  };
  CHECK(count("union()") == 1);
  CHECK(count("difference()") == 1);
  CHECK(count("linear_extrude") == 3);  // blade, cut, bow
  CHECK(count("polygon(") == 3);
}
