#include <doctest.h>

#include <cmath>
#include <random>

#include "keyforge/errors.hpp"
#include "keyforge/geometry.hpp"
#include "keyforge/synth.hpp"
#include "support.hpp"

using namespace keyforge;

namespace {

// Independent 3x3 inversion oracle (Gauss-Jordan, not the adjugate route
// the library uses).
std::array<std::array<double, 3>, 3> invert3_oracle(const PerspectiveParams& p) {
  double a[3][6] = {{p.theta[0], p.theta[1], p.theta[2], 1, 0, 0},
                    {p.theta[3], p.theta[4], p.theta[5], 0, 1, 0},
                    {p.theta[6], p.theta[7], 1.0, 0, 0, 1}};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    for (int c = 0; c < 6; ++c) std::swap(a[col][c], a[pivot][c]);
    const double d = a[col][col];
    for (int c = 0; c < 6; ++c) a[col][c] /= d;
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int c = 0; c < 6; ++c) a[r][c] -= f * a[col][c];
    }
  }
  return {{{a[0][3], a[0][4], a[0][5]}, {a[1][3], a[1][4], a[1][5]}, {a[2][3], a[2][4], a[2][5]}}};
}

Vec2 apply_mat_oracle(const std::array<std::array<double, 3>, 3>& m, Vec2 p) {
  const double w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
  return {(m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
          (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w};
}

}  // namespace

TEST_CASE("homography: identity and pure scale are forced") {
  const std::array<Vec2, 4> unit{Vec2{0, 0}, Vec2{1, 0}, Vec2{1, 1}, Vec2{0, 1}};
  const PerspectiveParams id = homography_from_correspondences(unit, unit);
  for (int i = 0; i < 8; ++i) CHECK(id.theta[i] == doctest::Approx(PerspectiveParams::identity().theta[i]).epsilon(1e-12));

  std::array<Vec2, 4> doubled;
  for (int i = 0; i < 4; ++i) doubled[i] = {2 * unit[i].x, 2 * unit[i].y};
  const PerspectiveParams sc = homography_from_correspondences(unit, doubled);
  const std::array<double, 8> want{2, 0, 0, 0, 2, 0, 0, 0};
  for (int i = 0; i < 8; ++i) CHECK(sc.theta[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("homography: compose-and-recover on 1000 random non-degenerate cases") {
  std::mt19937_64 rng(7101);
  int done = 0;
  double worst = 0.0;
  while (done < 1000) {
    const PerspectiveParams truth = kftest::random_homography(rng);
    std::array<Vec2, 4> src, dst;
    if (!kftest::generic_quad(truth, rng, src, dst)) continue;
    const PerspectiveParams got = homography_from_correspondences(src, dst);
    for (int i = 0; i < 8; ++i) worst = std::max(worst, std::abs(got.theta[i] - truth.theta[i]));
    // and the correspondences themselves are reproduced
    for (int i = 0; i < 4; ++i) {
      const Vec2 p = apply_homography(got, src[i]);
      CHECK(std::abs(p.x - dst[i].x) < 1e-9);
      CHECK(std::abs(p.y - dst[i].y) < 1e-9);
    }
    ++done;
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("homography: collinear points are rejected") {
  const std::array<Vec2, 4> collinear{Vec2{0, 0}, Vec2{1, 1}, Vec2{2, 2}, Vec2{0, 1}};
  const std::array<Vec2, 4> square{Vec2{0, 0}, Vec2{1, 0}, Vec2{1, 1}, Vec2{0, 1}};
  CHECK_THROWS_AS(homography_from_correspondences(collinear, square), DegenerateCorrespondences);
  const std::array<Vec2, 4> coincident{Vec2{0, 0}, Vec2{0, 0}, Vec2{1, 1}, Vec2{0, 1}};
  CHECK_THROWS_AS(homography_from_correspondences(coincident, square), DegenerateCorrespondences);
}

TEST_CASE("apply_homography basics") {
  CHECK(apply_homography(PerspectiveParams::identity(), {3, 4}).x == doctest::Approx(3.0));
  CHECK(apply_homography(PerspectiveParams::identity(), {3, 4}).y == doctest::Approx(4.0));

  const PerspectiveParams t = PerspectiveParams::translation(5, -2);
  const Vec2 p = apply_homography(t, {0, 0});
  CHECK(p.x == doctest::Approx(5.0));
  CHECK(p.y == doctest::Approx(-2.0));

  PerspectiveParams bad;
  bad.theta[6] = 1.0;  // w = x + 1 vanishes at x = -1
  CHECK_THROWS_AS(apply_homography(bad, {-1.0, 0.0}), PointAtInfinity);
}

TEST_CASE("apply then apply-inverse returns the input (inversion oracle)") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int done = 0;
  while (done < 200) {
    const PerspectiveParams h = kftest::random_homography(rng);
    const Vec2 p{u(rng), u(rng)};
    const double w = h.theta[6] * p.x + h.theta[7] * p.y + 1.0;
    if (std::abs(w) < 0.1) continue;

    const Vec2 q = apply_homography(h, p);
    if (std::abs(q.x) > 100 || std::abs(q.y) > 100) continue;

    // library inverse
    const Vec2 back = apply_homography(invert(h), q);
    CHECK(std::abs(back.x - p.x) < 1e-9);
    CHECK(std::abs(back.y - p.y) < 1e-9);

    // independent Gauss-Jordan oracle agrees
    const Vec2 oracle = apply_mat_oracle(invert3_oracle(h), q);
    CHECK(std::abs(oracle.x - p.x) < 1e-9);
    CHECK(std::abs(oracle.y - p.y) < 1e-9);
    ++done;
  }
}

TEST_CASE("warp_image: identity is bit-exact") {
  const RasterImage img = kftest::gradient_image(37, 23, 3);
  const RasterImage out = warp_image(img, PerspectiveParams::identity(), 37, 23);
  REQUIRE(out.samples.size() == img.samples.size());
  for (size_t i = 0; i < img.samples.size(); ++i) CHECK(out.samples[i] == img.samples[i]);
}

TEST_CASE("warp_image: integer translation is pixel-exact in the overlap") {
  const RasterImage img = kftest::gradient_image(40, 30);
  const RasterImage out = warp_image(img, PerspectiveParams::translation(10, 0), 40, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 10; x < 40; ++x) CHECK(out.at(x, y, 0) == img.at(x - 10, y, 0));
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 10; ++x) CHECK(out.at(x, y, 0) == 0.0f);
}

TEST_CASE("warp_image: warp then unwarp stays within 0.02 on a smooth image") {
  const int w = 257, h = 193;
  const RasterImage img = kftest::gradient_image(w, h);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  for (int rep = 0; rep < 5; ++rep) {
    PerspectiveParams p;
    p.theta = {1.0 + 0.02 * u(rng), 0.02 * u(rng),  3.0 * u(rng),
               0.02 * u(rng),       1.0 + 0.02 * u(rng), 3.0 * u(rng),
               2e-5 * u(rng),       2e-5 * u(rng)};
    const RasterImage inter = warp_image(img, p, w, h);
    const RasterImage back = warp_image(inter, invert(p), w, h);

    double worst = 0.0;
    for (int y = 2; y < h - 2; ++y)
      for (int x = 2; x < w - 2; ++x) {
        // only judge pixels whose intermediate sample stayed in frame
        const Vec2 q = apply_homography(p, {double(x), double(y)});
        if (q.x < 1 || q.x > w - 2 || q.y < 1 || q.y > h - 2) continue;
        worst = std::max(worst, std::abs(double(back.at(x, y, 0)) - double(img.at(x, y, 0))));
      }
    CHECK(worst < 0.02);
  }
}

TEST_CASE("warp_image rejects singular transforms") {
  PerspectiveParams p;
  p.theta = {1, 1, 0, 1, 1, 0, 0, 0};  // rank deficient
  const RasterImage img = kftest::gradient_image(8, 8);
  CHECK_THROWS_AS(warp_image(img, p, 8, 8), NonInvertibleTransform);
}

TEST_CASE("normalize/denormalize round-trip") {
  std::mt19937_64 rng(5);
  std::vector<PerspectiveParams> samples;
  for (int i = 0; i < 64; ++i) samples.push_back(kftest::random_homography(rng));
  const ParamStats stats = ParamStats::from_samples(samples);
  for (bool f : stats.sanitized) CHECK_FALSE(f);

  SUBCASE("theta = mean maps to zero") {
    PerspectiveParams mean;
    mean.theta = stats.mean;
    for (double v : normalize_params(mean, stats)) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("unit std, zero mean leaves theta unchanged") {
    ParamStats unit;
    const PerspectiveParams p = kftest::random_homography(rng);
    const auto v = normalize_params(p, unit);
    for (int i = 0; i < 8; ++i) CHECK(v[i] == p.theta[i]);
  }
  SUBCASE("round-trip exact to 1e-12 on 100 random thetas") {
    for (int i = 0; i < 100; ++i) {
      const PerspectiveParams p = kftest::random_homography(rng);
      const PerspectiveParams back = denormalize_params(normalize_params(p, stats), stats);
      for (int k = 0; k < 8; ++k) CHECK(std::abs(back.theta[k] - p.theta[k]) < 1e-12);
    }
  }
}

TEST_CASE("param stats JSON round-trip and degenerate std sanitizing") {
  const ParamStats s = param_stats_from_json(R"({"mean":[0,0,0,0,0,0,0,0],
    "std":[1,2,3,4,0,1,1,1]})");
  CHECK(s.sanitized[4]);
  CHECK(s.std[4] == 1.0);
  const ParamStats back = param_stats_from_json(param_stats_to_json(s));
  for (int i = 0; i < 8; ++i) CHECK(back.std[i] == s.std[i]);
}

TEST_CASE("flip_horizontal: involution and exact column mirror") {
  SUBCASE("1x1") {
    RasterImage img = RasterImage::zeros(1, 1, 1);
    img.at(0, 0, 0) = 0.7f;
    CHECK(flip_horizontal(img).at(0, 0, 0) == 0.7f);
  }
  SUBCASE("2x1 swaps") {
    RasterImage img = RasterImage::zeros(2, 1, 1);
    img.at(0, 0, 0) = 0.25f;
    img.at(1, 0, 0) = 0.75f;
    const RasterImage f = flip_horizontal(img);
    CHECK(f.at(0, 0, 0) == 0.75f);
    CHECK(f.at(1, 0, 0) == 0.25f);
  }
  SUBCASE("double flip is bit-exact") {
    const RasterImage img = kftest::gradient_image(31, 17, 3);
    const RasterImage back = flip_horizontal(flip_horizontal(img));
    for (size_t i = 0; i < img.samples.size(); ++i) CHECK(back.samples[i] == img.samples[i]);
  }
}

TEST_CASE("detect_flip_heuristic: renders, mirrors and the tie-break") {
  const KeySpec spec = KeySpec::default_spec();
  const BittingCode code = BittingCode::parse("2-4-0-7-5");
  const BitMask upright = render_key_mask(code, spec, 6.0);

  const FlipDecision up = detect_flip_heuristic(upright);
  CHECK(up.orientation == Orientation::upright);
  CHECK(up.confidence > 0.6);

  const FlipDecision down = detect_flip_heuristic(flip_vertical(upright));
  CHECK(down.orientation == Orientation::flipped);
  CHECK(down.confidence > 0.6);

  SUBCASE("every synthetic render disagrees with its mirror") {
    for (uint64_t s = 1; s <= 20; ++s) {
      const BittingCode c = random_macs_valid_code(spec, s);
      const BitMask m = render_key_mask(c, spec, 5.0);
      CHECK(detect_flip_heuristic(m).orientation !=
            detect_flip_heuristic(flip_vertical(m)).orientation);
    }
  }

  SUBCASE("perfect rectangle ties to upright at 0.5") {
    BitMask rect = BitMask::zeros(40, 20);
    for (int y = 5; y < 15; ++y)
      for (int x = 5; x < 35; ++x) rect.set(x, y, true);
    const FlipDecision d = detect_flip_heuristic(rect);
    CHECK(d.orientation == Orientation::upright);
    CHECK(d.confidence == doctest::Approx(0.5));
  }

  SUBCASE("empty mask throws") {
    CHECK_THROWS_AS(detect_flip_heuristic(BitMask::zeros(4, 4)), EmptyMask);
  }
}
