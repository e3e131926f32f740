#include "keyforge/bitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "keyforge/errors.hpp"

namespace keyforge {

namespace {

// 4-connected component labels; returns label count (labels are 1-based,
// 0 = background/off).
int label_components(const std::vector<uint8_t>& cells, int w, int h, std::vector<int>& labels) {
  labels.assign(cells.size(), 0);
  int next = 0;
  std::vector<size_t> stack;
  for (size_t start = 0; start < cells.size(); ++start) {
    if (!cells[start] || labels[start]) continue;
    ++next;
    stack.push_back(start);
    labels[start] = next;
    while (!stack.empty()) {
      const size_t i = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(i % w);
      const int y = static_cast<int>(i / w);
      const std::array<std::pair<int, int>, 4> nbrs{{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
      for (auto [nx, ny] : nbrs) {
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        const size_t ni = static_cast<size_t>(ny) * w + nx;
        if (cells[ni] && !labels[ni]) {
          labels[ni] = next;
          stack.push_back(ni);
        }
      }
    }
  }
  return next;
}

double luminance(const RasterImage& img, int x, int y) {
  if (img.channels == 1) return img.at(x, y, 0);
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

}  // namespace

BitMask segment_threshold(const RasterImage& patch) {
  if (patch.width < 1 || patch.height < 1) throw NoForeground("empty patch");

  // Otsu: maximize between-class variance over a 256-bin histogram.
  std::array<double, 256> hist{};
  const double total = static_cast<double>(patch.width) * patch.height;
  for (int y = 0; y < patch.height; ++y)
    for (int x = 0; x < patch.width; ++x) {
      int bin = static_cast<int>(luminance(patch, x, y) * 255.0 + 0.5);
      hist[std::clamp(bin, 0, 255)] += 1.0;
    }

  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];

  double best_sigma = 0.0;
  int best_k = -1;
  double w0 = 0, sum0 = 0;
  for (int k = 0; k < 255; ++k) {
    w0 += hist[k];
    sum0 += k * hist[k];
    const double w1 = total - w0;
    if (w0 <= 0 || w1 <= 0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double sigma = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_k = k;
    }
  }
  if (best_k < 0 || best_sigma <= 0.0)
    throw NoForeground("no intensity split (uniform patch?)");

  // Foreground = brighter class.
  std::vector<uint8_t> fg(static_cast<size_t>(patch.width) * patch.height, 0);
  for (int y = 0; y < patch.height; ++y)
    for (int x = 0; x < patch.width; ++x) {
      int bin = static_cast<int>(luminance(patch, x, y) * 255.0 + 0.5);
      fg[static_cast<size_t>(y) * patch.width + x] = std::clamp(bin, 0, 255) > best_k ? 1 : 0;
    }

  // Largest 4-connected component.
  std::vector<int> labels;
  const int n = label_components(fg, patch.width, patch.height, labels);
  if (n == 0) throw NoForeground("threshold produced an empty mask");
  std::vector<size_t> sizes(n + 1, 0);
  for (int l : labels)
    if (l) ++sizes[l];
  const int keep = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) -
                                    sizes.begin());

  BitMask mask = BitMask::zeros(patch.width, patch.height);
  for (size_t i = 0; i < labels.size(); ++i) mask.bits[i] = labels[i] == keep ? 1 : 0;

  // Fill interior holes: background components not reaching the border.
  std::vector<uint8_t> bg(mask.bits.size());
  for (size_t i = 0; i < bg.size(); ++i) bg[i] = mask.bits[i] ? 0 : 1;
  std::vector<int> bg_labels;
  const int nbg = label_components(bg, mask.width, mask.height, bg_labels);
  std::vector<uint8_t> touches_border(nbg + 1, 0);
  for (int x = 0; x < mask.width; ++x) {
    if (int l = bg_labels[x]; l) touches_border[l] = 1;
    if (int l = bg_labels[static_cast<size_t>(mask.height - 1) * mask.width + x]; l)
      touches_border[l] = 1;
  }
  for (int y = 0; y < mask.height; ++y) {
    if (int l = bg_labels[static_cast<size_t>(y) * mask.width]; l) touches_border[l] = 1;
    if (int l = bg_labels[static_cast<size_t>(y) * mask.width + mask.width - 1]; l)
      touches_border[l] = 1;
  }
  for (size_t i = 0; i < mask.bits.size(); ++i)
    if (bg_labels[i] && !touches_border[bg_labels[i]]) mask.bits[i] = 1;

  return mask;
}

std::vector<PixelCoord> extract_boundary(const BitMask& mask) {
  std::vector<int> labels;
  const int n = label_components(mask.bits, mask.width, mask.height, labels);
  if (n == 0) throw EmptyMask("cannot trace an empty mask");
  if (n > 1) throw MultipleComponents("boundary tracing needs a single 4-connected component");

  // Start pixel: left-most of the top-most foreground pixels.
  PixelCoord start{-1, -1};
  for (int y = 0; y < mask.height && start.x < 0; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        start = {x, y};
        break;
      }

  // Moore neighborhood in visually counter-clockwise order (y down):
  // E, NE, N, NW, W, SW, S, SE. Walking from the start with a west
  // backtrack descends the left flank first.
  static constexpr std::array<std::pair<int, int>, 8> dirs{
      {{1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}}};
  auto dir_index = [&](PixelCoord from, PixelCoord to) {
    for (int i = 0; i < 8; ++i)
      if (from.x + dirs[i].first == to.x && from.y + dirs[i].second == to.y) return i;
    return -1;
  };
  auto is_fg = [&](int x, int y) { return mask.in_bounds(x, y) && mask.at(x, y); };

  std::vector<PixelCoord> boundary{start};
  PixelCoord current = start;
  PixelCoord backtrack{start.x - 1, start.y};  // west neighbor is background
  PixelCoord second{-1, -1};

  const size_t step_limit = mask.bits.size() * 8 + 16;
  for (size_t step = 0; step < step_limit; ++step) {
    const int b = dir_index(current, backtrack);
    PixelCoord next{-1, -1};
    PixelCoord last_bg = backtrack;
    for (int k = 1; k <= 8; ++k) {
      const auto [dx, dy] = dirs[(b + k) % 8];
      const PixelCoord cand{current.x + dx, current.y + dy};
      if (is_fg(cand.x, cand.y)) {
        next = cand;
        break;
      }
      last_bg = cand;
    }
    if (next.x < 0) break;  // isolated pixel

    if (second.x < 0) {
      second = next;
    } else if (current == start && next == second) {
      break;  // Jacob's stopping criterion: the walk repeats
    }
    boundary.push_back(next);
    backtrack = last_bg;
    current = next;
  }
  if (boundary.size() > 1 && boundary.back() == start) boundary.pop_back();
  return boundary;
}

Keypoints locate_keypoints(const BitMask& mask) {
  int x0 = mask.width, x1 = -1, y0 = mask.height, y1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw EmptyMask("cannot locate keypoints on an empty mask");

  // Tip: right-most foreground pixel, bottom of ties (the blade baseline).
  int tip_y = -1;
  for (int y = 0; y < mask.height; ++y)
    if (mask.at(x1, y)) tip_y = y;

  // Shoulder: left-most foreground pixel within the bottom quarter of the
  // key's bounding box, bottom of ties.
  const int band_top = y0 + static_cast<int>(std::floor(0.75 * (y1 - y0)));
  int sx = -1, sy = -1;
  for (int x = x0; x <= x1 && sx < 0; ++x)
    for (int y = band_top; y <= y1; ++y)
      if (mask.at(x, y)) {
        sx = x;
        sy = y;
      }
  for (int y = sy + 1; y <= y1; ++y)
    if (mask.at(sx, y)) sy = y;

  if (sx == x1) throw DegenerateBlade("shoulder and tip coincide (single-column blade)");

  Keypoints kp;
  kp.shoulder = {static_cast<double>(sx), static_cast<double>(sy)};
  kp.tip = {static_cast<double>(x1), static_cast<double>(tip_y)};
  return kp;
}

std::vector<double> cast_virtual_pins(const BitMask& mask, const KeySpec& spec) {
  if (!mask.keypoints) throw EmptyMask("virtual pins need keypoints on the mask");
  const Keypoints& kp = *mask.keypoints;
  if (!(kp.shoulder.x < kp.tip.x))
    throw DegenerateBlade("keypoints must satisfy shoulder.x < tip.x");

  const double px_per_mm = (kp.tip.x - kp.shoulder.x) / spec.blade_length_mm;
  const double px_per_blade_height = px_per_mm * spec.blade_height_mm;
  const int baseline = static_cast<int>(std::lround(kp.shoulder.y));

  std::vector<double> heights;
  heights.reserve(spec.pin_positions_mm.size());
  for (size_t i = 0; i < spec.pin_positions_mm.size(); ++i) {
    const double xf = kp.shoulder.x +
                      spec.pin_positions_mm[i] / spec.blade_length_mm * (kp.tip.x - kp.shoulder.x);
    const int col = static_cast<int>(std::lround(xf));
    if (col < 0 || col >= mask.width)
      throw OutOfFrame("pin " + std::to_string(i) + " column outside the mask");

    // Ray upward from below: find the first run of material, then its top.
    int y = mask.height - 1;
    while (y >= 0 && !mask.at(col, y)) --y;
    if (y < 0) throw RayMiss(static_cast<int>(i));
    int top = y;
    while (top - 1 >= 0 && mask.at(col, top - 1)) --top;

    const double height_px = static_cast<double>(baseline - top + 1);
    heights.push_back(height_px / px_per_blade_height);
  }
  return heights;
}

BittingCode heights_to_code(const std::vector<double>& heights, const KeySpec& spec) {
  BittingCode code;
  code.depths.reserve(heights.size());
  for (double h : heights) {
    const double h_mm = h * spec.blade_height_mm;
    int best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (int k = 0; k < spec.depth_chart.num_depths; ++k) {
      const double err = std::abs(h_mm - spec.depth_chart.depth_height_mm(k));
      // strict '<' keeps the shallower index on ties
      if (err < best_err) {
        best_err = err;
        best = k;
      }
    }
    code.depths.push_back(best);
  }
  return code;
}

MacsReport validate_macs(const BittingCode& code, const KeySpec& spec) {
  if (static_cast<int>(code.depths.size()) != spec.pin_count())
    throw LengthMismatch("code length " + std::to_string(code.depths.size()) +
                         " does not match pin count " + std::to_string(spec.pin_count()));
  MacsReport report;
  for (size_t i = 0; i + 1 < code.depths.size(); ++i) {
    const int delta = std::abs(code.depths[i + 1] - code.depths[i]);
    if (delta > spec.macs) {
      report.valid = false;
      report.breaches.push_back({static_cast<int>(i), delta});
    }
  }
  return report;
}

}  // namespace keyforge
