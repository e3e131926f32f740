#include "keyforge/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "keyforge/errors.hpp"

namespace keyforge {

namespace {

struct Mat3 {
  double m[3][3];

  static Mat3 from_params(const PerspectiveParams& p) {
    const auto& t = p.theta;
    return Mat3{{{t[0], t[1], t[2]}, {t[3], t[4], t[5]}, {t[6], t[7], 1.0}}};
  }

  double det() const {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }

  Mat3 adjugate() const {
    Mat3 a;
    a.m[0][0] = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    a.m[0][1] = m[0][2] * m[2][1] - m[0][1] * m[2][2];
    a.m[0][2] = m[0][1] * m[1][2] - m[0][2] * m[1][1];
    a.m[1][0] = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    a.m[1][1] = m[0][0] * m[2][2] - m[0][2] * m[2][0];
    a.m[1][2] = m[0][2] * m[1][0] - m[0][0] * m[1][2];
    a.m[2][0] = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    a.m[2][1] = m[0][1] * m[2][0] - m[0][0] * m[2][1];
    a.m[2][2] = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    return a;
  }

  Mat3 mul(const Mat3& o) const {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
        r.m[i][j] = s;
      }
    return r;
  }

  // Projective application; throws PointAtInfinity on vanishing w.
  Vec2 apply(Vec2 p) const {
    double w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if (std::abs(w) < 1e-12) throw PointAtInfinity("projective denominator vanished");
    return {(m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w};
  }

  PerspectiveParams to_params() const {
    if (std::abs(m[2][2]) < 1e-12)
      throw NonInvertibleTransform("transform leaves the 8-parameter chart (H[2][2] ~ 0)");
    double s = 1.0 / m[2][2];
    return PerspectiveParams{{m[0][0] * s, m[0][1] * s, m[0][2] * s, m[1][0] * s, m[1][1] * s,
                              m[1][2] * s, m[2][0] * s, m[2][1] * s}};
  }
};

// Solves A x = b in place, partial pivoting. Throws on a singular system.
void solve_linear(double a[8][8], double b[8], double x[8]) {
  int perm[8];
  for (int i = 0; i < 8; ++i) perm[i] = i;

  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    double best = std::abs(a[perm[col]][col]);
    for (int r = col + 1; r < 8; ++r) {
      double v = std::abs(a[perm[r]][col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best < 1e-12)
      throw DegenerateCorrespondences("singular correspondence system (collinear points?)");
    std::swap(perm[col], perm[pivot]);

    const int pr = perm[col];
    for (int r = col + 1; r < 8; ++r) {
      const int rr = perm[r];
      double f = a[rr][col] / a[pr][col];
      if (f == 0.0) continue;
      a[rr][col] = 0.0;
      for (int c = col + 1; c < 8; ++c) a[rr][c] -= f * a[pr][c];
      b[rr] -= f * b[pr];
    }
  }

  for (int i = 7; i >= 0; --i) {
    const int r = perm[i];
    double s = b[r];
    for (int c = i + 1; c < 8; ++c) s -= a[r][c] * x[c];
    x[i] = s / a[r][i];
  }
}

float bilinear(const RasterImage& img, double x, double y, int c) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;

  auto sample = [&](int sx, int sy) -> double {
    return img.in_bounds(sx, sy) ? img.at(sx, sy, c) : 0.0;
  };

  double v = (1.0 - fx) * (1.0 - fy) * sample(x0, y0);
  if (fx != 0.0) v += fx * (1.0 - fy) * sample(x0 + 1, y0);
  if (fy != 0.0) v += (1.0 - fx) * fy * sample(x0, y0 + 1);
  if (fx != 0.0 && fy != 0.0) v += fx * fy * sample(x0 + 1, y0 + 1);
  return static_cast<float>(v);
}

}  // namespace

double PerspectiveParams::det3() const { return Mat3::from_params(*this).det(); }

PerspectiveParams homography_from_correspondences(const std::array<Vec2, 4>& src,
                                                  const std::array<Vec2, 4>& dst) {
  // Rows: [x y 1 0 0 0 -xX -yX] h = X  and  [0 0 0 x y 1 -xY -yY] h = Y.
  double a[8][8];
  double b[8];
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y;
    const double X = dst[i].x, Y = dst[i].y;
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x;  r0[1] = y;  r0[2] = 1;  r0[3] = 0;  r0[4] = 0;  r0[5] = 0;
    r0[6] = -x * X;  r0[7] = -y * X;
    r1[0] = 0;  r1[1] = 0;  r1[2] = 0;  r1[3] = x;  r1[4] = y;  r1[5] = 1;
    r1[6] = -x * Y;  r1[7] = -y * Y;
    b[2 * i] = X;
    b[2 * i + 1] = Y;
  }

  PerspectiveParams p;
  solve_linear(a, b, p.theta.data());
  if (!p.invertible())
    throw DegenerateCorrespondences("estimated transform is not invertible");
  return p;
}

Vec2 apply_homography(const PerspectiveParams& p, Vec2 pt) {
  return Mat3::from_params(p).apply(pt);
}

PerspectiveParams invert(const PerspectiveParams& p) {
  Mat3 h = Mat3::from_params(p);
  if (std::abs(h.det()) < 1e-12) throw NonInvertibleTransform("singular transform");
  return h.adjugate().to_params();
}

PerspectiveParams compose(const PerspectiveParams& a, const PerspectiveParams& b) {
  return Mat3::from_params(a).mul(Mat3::from_params(b)).to_params();
}

RasterImage warp_image(const RasterImage& img, const PerspectiveParams& p, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw Error("warp target must be at least 1x1");
  Mat3 h = Mat3::from_params(p);
  if (std::abs(h.det()) < 1e-12) throw NonInvertibleTransform("singular transform");
  const Mat3 inv = h.adjugate();  // projective scale is irrelevant

  RasterImage out = RasterImage::zeros(out_w, out_h, img.channels);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double w = inv.m[2][0] * x + inv.m[2][1] * y + inv.m[2][2];
      if (std::abs(w) < 1e-12) continue;  // point at infinity stays black
      const double sx = (inv.m[0][0] * x + inv.m[0][1] * y + inv.m[0][2]) / w;
      const double sy = (inv.m[1][0] * x + inv.m[1][1] * y + inv.m[1][2]) / w;
      if (sx <= -1.0 || sx >= img.width || sy <= -1.0 || sy >= img.height) continue;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = bilinear(img, sx, sy, c);
    }
  }
  return out;
}

ParamStats ParamStats::from_samples(const std::vector<PerspectiveParams>& samples) {
  ParamStats s;
  if (samples.empty()) {
    s.sanitized.fill(true);
    return s;
  }
  for (int i = 0; i < 8; ++i) {
    double mean = 0;
    for (const auto& p : samples) mean += p.theta[i];
    mean /= samples.size();
    double var = 0;
    for (const auto& p : samples) {
      const double d = p.theta[i] - mean;
      var += d * d;
    }
    var /= samples.size();
    s.mean[i] = mean;
    const double sd = std::sqrt(var);
    if (sd > 1e-12) {
      s.std[i] = sd;
    } else {
      s.std[i] = 1.0;
      s.sanitized[i] = true;
    }
  }
  return s;
}

std::array<double, 8> normalize_params(const PerspectiveParams& p, const ParamStats& s) {
  std::array<double, 8> v;
  for (int i = 0; i < 8; ++i) v[i] = (p.theta[i] - s.mean[i]) / s.std[i];
  return v;
}

PerspectiveParams denormalize_params(const std::array<double, 8>& v, const ParamStats& s) {
  PerspectiveParams p;
  for (int i = 0; i < 8; ++i) p.theta[i] = v[i] * s.std[i] + s.mean[i];
  return p;
}

RasterImage flip_horizontal(const RasterImage& img) {
  RasterImage out = RasterImage::zeros(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

RasterImage flip_vertical(const RasterImage& img) {
  RasterImage out = RasterImage::zeros(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x, img.height - 1 - y, c);
  return out;
}

BitMask flip_vertical(const BitMask& mask) {
  BitMask out = BitMask::zeros(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.set(x, y, mask.at(x, mask.height - 1 - y));
  if (mask.keypoints) {
    Keypoints kp = *mask.keypoints;
    kp.shoulder.y = mask.height - 1 - kp.shoulder.y;
    kp.tip.y = mask.height - 1 - kp.tip.y;
    out.keypoints = kp;
  }
  return out;
}

FlipDecision detect_flip_heuristic(const BitMask& mask) {
  int x0 = mask.width, x1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  if (x1 < 0) throw EmptyMask("flip heuristic needs a non-empty mask");

  // The bow dominates the left of the silhouette; judge edge roughness on
  // the right 60% of the span where the blade lives.
  const int lo = x0 + static_cast<int>(0.4 * (x1 - x0));
  std::vector<double> top, bot;
  for (int x = lo; x <= x1; ++x) {
    int ty = -1, by = -1;
    for (int y = 0; y < mask.height; ++y)
      if (mask.at(x, y)) {
        if (ty < 0) ty = y;
        by = y;
      }
    if (ty >= 0) {
      top.push_back(ty);
      bot.push_back(by);
    }
  }

  auto variance = [](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var / v.size();
  };

  const double var_top = variance(top);
  const double var_bot = variance(bot);
  const double total = var_top + var_bot;
  if (total <= 0.0) return {Orientation::upright, 0.5};

  if (var_top >= var_bot) return {Orientation::upright, var_top / total};
  return {Orientation::flipped, var_bot / total};
}

ParamStats param_stats_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ParamStats s;
  const auto& mean = j.at("mean");
  const auto& std_ = j.at("std");
  if (mean.size() != 8 || std_.size() != 8)
    throw SpecInvalid("param stats need 8 mean and 8 std entries");
  for (int i = 0; i < 8; ++i) {
    s.mean[i] = mean[i].get<double>();
    const double sd = std_[i].get<double>();
    if (sd > 1e-12) {
      s.std[i] = sd;
    } else {
      s.std[i] = 1.0;
      s.sanitized[i] = true;
    }
  }
  return s;
}

std::string param_stats_to_json(const ParamStats& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  return j.dump();
}

}  // namespace keyforge
