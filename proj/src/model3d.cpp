#include "keyforge/model3d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "keyforge/errors.hpp"

namespace keyforge {

namespace {

constexpr double kOnLineEps = 1e-9;

Vec3 sub(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

std::vector<Vec2> dedupe(const std::vector<Vec2>& poly) {
  std::vector<Vec2> out;
  for (const Vec2& p : poly) {
    if (!out.empty() && std::abs(out.back().x - p.x) < 1e-12 &&
        std::abs(out.back().y - p.y) < 1e-12)
      continue;
    out.push_back(p);
  }
  while (out.size() > 1 && std::abs(out.front().x - out.back().x) < 1e-12 &&
         std::abs(out.front().y - out.back().y) < 1e-12)
    out.pop_back();
  return out;
}

// Clip a simple polygon by the half-plane v <= h. The precondition for the
// sweep is that the result is a single simple polygon; boundaries that
// cross the line in more than one run are rejected.
std::vector<Vec2> clip_below(const std::vector<Vec2>& poly, double h) {
  std::vector<Vec2> pts = poly;
  for (Vec2& p : pts)
    if (std::abs(p.y - h) < kOnLineEps) p.y = h;

  bool any_above = false, any_below = false;
  for (const Vec2& p : pts) {
    if (p.y > h) any_above = true;
    if (p.y < h) any_below = true;
  }
  if (!any_above) return pts;  // nothing to cut
  if (!any_below) throw ClipNotSimple("clip height below the whole cross-section");

  // Count maximal runs of strictly-above vertices around the cycle.
  int runs = 0;
  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    const bool above = pts[i].y > h;
    const bool prev_above = pts[(i + n - 1) % n].y > h;
    if (above && !prev_above) ++runs;
  }
  if (runs != 1)
    throw ClipNotSimple("clip yields " + std::to_string(runs) + " pieces above the cut line");

  std::vector<Vec2> out;
  for (size_t i = 0; i < n; ++i) {
    const Vec2 a = pts[i];
    const Vec2 b = pts[(i + 1) % n];
    const bool a_in = a.y <= h;
    const bool b_in = b.y <= h;
    if (a_in) out.push_back(a);
    if (a_in != b_in) {
      const double t = (h - a.y) / (b.y - a.y);
      out.push_back({a.x + t * (b.x - a.x), h});
    }
  }
  out = dedupe(out);
  if (out.size() < 3 || std::abs(polygon_area(out)) <= 0.0)
    throw ClipNotSimple("clip degenerated the cross-section");
  return out;
}

// Arc-length resampling to `ring` vertices with the original corners
// snapped onto the nearest samples (keeps prisms and boxes exact). The
// start vertex is the u-minimum vertex (ties broken toward v-minimum) so
// consecutive rings stitch without twisting.
std::vector<Vec2> resample_ring(std::vector<Vec2> poly, int ring) {
  poly = dedupe(poly);
  if (polygon_area(poly) < 0) std::reverse(poly.begin(), poly.end());

  size_t start = 0;
  for (size_t i = 1; i < poly.size(); ++i) {
    if (poly[i].x < poly[start].x - 1e-12 ||
        (std::abs(poly[i].x - poly[start].x) < 1e-12 && poly[i].y < poly[start].y))
      start = i;
  }
  std::rotate(poly.begin(), poly.begin() + start, poly.end());

  const size_t n = poly.size();
  std::vector<double> arc(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    arc[i + 1] = arc[i] + std::hypot(b.x - a.x, b.y - a.y);
  }
  const double perimeter = arc[n];

  std::vector<Vec2> out(ring);
  size_t edge = 0;
  for (int k = 0; k < ring; ++k) {
    const double s = perimeter * k / ring;
    while (edge + 1 < n && arc[edge + 1] < s) ++edge;
    const Vec2 a = poly[edge];
    const Vec2 b = poly[(edge + 1) % n];
    const double len = arc[edge + 1] - arc[edge];
    const double t = len > 0 ? (s - arc[edge]) / len : 0.0;
    out[k] = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
  }

  int prev_slot = 0;
  out[0] = poly[0];
  for (size_t i = 1; i < n; ++i) {
    int slot = static_cast<int>(std::lround(arc[i] / perimeter * ring));
    slot = std::max(slot, prev_slot + 1);
    if (slot >= ring) break;
    out[slot] = poly[i];
    prev_slot = slot;
  }
  return out;
}

Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
  double a2 = 0, cx = 0, cy = 0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % n];
    const double w = p.x * q.y - q.x * p.y;
    a2 += w;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  if (std::abs(a2) < 1e-15) return poly.front();
  return {cx / (3 * a2), cy / (3 * a2)};
}

// Kernel of a CCW simple polygon via half-plane intersection; empty result
// falls back to the area centroid. Fanning caps from a kernel point keeps
// them geometrically planar-simple for warded keyways.
Vec2 fan_center(const std::vector<Vec2>& poly) {
  std::vector<Vec2> kernel = poly;
  const size_t n = poly.size();
  for (size_t i = 0; i < n && kernel.size() >= 3; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    // interior is left of a->b
    const double nx = -(b.y - a.y), ny = b.x - a.x;
    std::vector<Vec2> next;
    const size_t m = kernel.size();
    for (size_t j = 0; j < m; ++j) {
      const Vec2 p = kernel[j];
      const Vec2 q = kernel[(j + 1) % m];
      const double dp = (p.x - a.x) * nx + (p.y - a.y) * ny;
      const double dq = (q.x - a.x) * nx + (q.y - a.y) * ny;
      if (dp >= -1e-12) next.push_back(p);
      if ((dp > 1e-12 && dq < -1e-12) || (dp < -1e-12 && dq > 1e-12)) {
        const double t = dp / (dp - dq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    kernel = dedupe(next);
  }
  if (kernel.size() >= 3) return polygon_centroid(kernel);
  return polygon_centroid(poly);
}

// Lofts cross-section rings (all the same size, CCW in (u,v)) along x and
// caps both ends with vertex fans.
TriMesh sweep_mesh(const std::vector<double>& xs, const std::vector<std::vector<Vec2>>& rings) {
  const int ring = static_cast<int>(rings.front().size());
  const int stations = static_cast<int>(xs.size());

  TriMesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(stations) * ring + 2);
  for (int j = 0; j < stations; ++j)
    for (const Vec2& p : rings[j]) mesh.vertices.push_back({xs[j], p.x, p.y});

  const Vec2 c0 = fan_center(rings.front());
  const Vec2 c1 = fan_center(rings.back());
  const int center0 = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back({xs.front(), c0.x, c0.y});
  const int center1 = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back({xs.back(), c1.x, c1.y});

  auto vid = [&](int j, int k) { return j * ring + (k % ring); };
  for (int j = 0; j + 1 < stations; ++j)
    for (int k = 0; k < ring; ++k) {
      const int a = vid(j, k), b = vid(j, k + 1);
      const int c = vid(j + 1, k + 1), d = vid(j + 1, k);
      mesh.triangles.push_back({a, b, c});
      mesh.triangles.push_back({a, c, d});
    }
  for (int k = 0; k < ring; ++k) {
    mesh.triangles.push_back({center0, vid(0, k + 1), vid(0, k)});
    mesh.triangles.push_back({center1, vid(stations - 1, k), vid(stations - 1, k + 1)});
  }
  return mesh;
}

void store_f32_le(std::string& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  buf.push_back(static_cast<char>(bits & 0xff));
  buf.push_back(static_cast<char>((bits >> 8) & 0xff));
  buf.push_back(static_cast<char>((bits >> 16) & 0xff));
  buf.push_back(static_cast<char>((bits >> 24) & 0xff));
}

uint32_t load_u32_le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float load_f32_le(const unsigned char* p) {
  const uint32_t bits = load_u32_le(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

double HeightProfile::value(double x) const {
  if (knots.empty()) return 0.0;
  if (x <= knots.front().x) return knots.front().h;
  if (x >= knots.back().x) return knots.back().h;
  size_t lo = 0, hi = knots.size() - 1;
  while (hi - lo > 1) {
    const size_t mid = (lo + hi) / 2;
    (knots[mid].x <= x ? lo : hi) = mid;
  }
  const double t = (x - knots[lo].x) / (knots[hi].x - knots[lo].x);
  return knots[lo].h + t * (knots[hi].h - knots[lo].h);
}

HeightProfile HeightProfile::constant(double h, double length) {
  return HeightProfile{{{0.0, h}, {length, h}}};
}

HeightProfile HeightProfile::from_code(const BittingCode& code, const KeySpec& spec,
                                       double root_width_mm) {
  if (static_cast<int>(code.depths.size()) != spec.pin_count())
    throw LengthMismatch("code length does not match pin count");

  const double H = spec.blade_height_mm;
  const double hw = root_width_mm / 2.0;
  const int n = spec.pin_count();

  // Envelope of per-pin cut profiles: flat root, 45 degree flanks, capped
  // at the uncut blade height.
  auto cut = [&](int i, double x) {
    const double root = spec.depth_chart.depth_height_mm(code.depths[i]);
    const double d = std::abs(x - spec.pin_positions_mm[i]);
    return std::min(H, root + std::max(0.0, d - hw));
  };
  auto envelope = [&](double x) {
    double h = H;
    for (int i = 0; i < n; ++i) h = std::min(h, cut(i, x));
    return h;
  };

  // Breakpoints: root edges, flank/cap intersections and pairwise flank
  // crossings; the envelope is linear between consecutive breakpoints.
  std::vector<double> xs{0.0, spec.blade_length_mm};
  for (int i = 0; i < n; ++i) {
    const double d = spec.pin_positions_mm[i];
    const double root = spec.depth_chart.depth_height_mm(code.depths[i]);
    xs.insert(xs.end(), {d - hw, d + hw, d - hw - (H - root), d + hw + (H - root)});
    for (int j = i + 1; j < n; ++j) {
      const double dj = spec.pin_positions_mm[j];
      const double rootj = spec.depth_chart.depth_height_mm(code.depths[j]);
      xs.push_back(((rootj - root) + (d + hw) + (dj - hw)) / 2.0);
    }
  }
  std::sort(xs.begin(), xs.end());

  HeightProfile profile;
  for (double x : xs) {
    if (x < 0.0 || x > spec.blade_length_mm) continue;
    if (!profile.knots.empty() && x - profile.knots.back().x < 1e-9) continue;
    profile.knots.push_back({x, envelope(x)});
  }
  return profile;
}

void TriMesh::append(const TriMesh& other) {
  const int offset = static_cast<int>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& t : other.triangles)
    triangles.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
}

BowSpec BowSpec::default_bow() {
  BowSpec bow;
  // 20x20 mm rounded square centered over the keyway cross-section.
  const double cx = 1.4, cy = 4.75, half = 10.0, r = 3.0;
  const int arc_steps = 5;
  const std::array<Vec2, 4> centers{{{cx + half - r, cy + half - r},
                                     {cx - half + r, cy + half - r},
                                     {cx - half + r, cy - half + r},
                                     {cx + half - r, cy - half + r}}};
  for (int corner = 0; corner < 4; ++corner) {
    const double a0 = corner * M_PI / 2.0;
    for (int s = 0; s <= arc_steps; ++s) {
      const double a = a0 + s * (M_PI / 2.0) / arc_steps;
      bow.outline.push_back(
          {centers[corner].x + r * std::cos(a), centers[corner].y + r * std::sin(a)});
    }
  }
  return bow;
}

HeightProfile bitting_height_profile(const std::vector<PixelCoord>& boundary,
                                     const Keypoints& keypoints, const KeySpec& spec,
                                     int stations) {
  if (boundary.empty()) throw EmptyMask("empty boundary");
  if (!(keypoints.shoulder.x < keypoints.tip.x))
    throw DegenerateBlade("shoulder and tip coincide");
  if (stations < 2) throw Error("profile needs at least 2 stations");

  const double px_per_mm = (keypoints.tip.x - keypoints.shoulder.x) / spec.blade_length_mm;
  const double baseline = std::lround(keypoints.shoulder.y);

  // Upper envelope of the boundary over uniform stations along the blade.
  const double dx = spec.blade_length_mm / (stations - 1);
  std::vector<double> best(stations, -1.0);
  for (const PixelCoord& p : boundary) {
    const double x_mm = (p.x - keypoints.shoulder.x) / px_per_mm;
    const double h_mm = (baseline - p.y + 1) / px_per_mm;
    const int station = static_cast<int>(std::lround(x_mm / dx));
    if (station < 0 || station >= stations) continue;
    best[station] = std::max(best[station], h_mm);
  }

  // Interpolate stations no boundary point landed on.
  int first = -1, last = -1;
  for (int i = 0; i < stations; ++i)
    if (best[i] >= 0) {
      if (first < 0) first = i;
      last = i;
    }
  if (first < 0) throw DegenerateBlade("no boundary points project onto the blade");
  for (int i = 0; i < first; ++i) best[i] = best[first];
  for (int i = last + 1; i < stations; ++i) best[i] = best[last];
  for (int i = first + 1; i < last; ++i) {
    if (best[i] >= 0) continue;
    int j = i;
    while (best[j] < 0) ++j;
    const double h0 = best[i - 1], h1 = best[j];
    for (int k = i; k < j; ++k) best[k] = h0 + (h1 - h0) * (k - i + 1) / (j - i + 1);
    i = j;
  }

  HeightProfile profile;
  profile.knots.reserve(stations);
  const double floor_mm = 0.05;  // clamp into (0, blade_height]
  for (int i = 0; i < stations; ++i)
    profile.knots.push_back({i * dx, std::clamp(best[i], floor_mm, spec.blade_height_mm)});
  return profile;
}

TriMesh build_blade_mesh(const KeySpec& spec, const HeightProfile& profile, int stations,
                         int ring) {
  if (stations < 2) throw Error("at least 2 stations required");
  if (ring < 8) throw Error("at least 8 ring vertices required");
  spec.validate();

  std::vector<Vec2> keyway = spec.keyway;
  if (polygon_area(keyway) < 0) std::reverse(keyway.begin(), keyway.end());
  double keyway_top = keyway.front().y;
  for (const Vec2& p : keyway) keyway_top = std::max(keyway_top, p.y);

  bool clamped = false;
  std::vector<double> xs(stations);
  std::vector<std::vector<Vec2>> rings(stations);
  for (int j = 0; j < stations; ++j) {
    xs[j] = spec.blade_length_mm * j / (stations - 1);
    double h = profile.value(xs[j]);
    if (h > keyway_top) {
      h = keyway_top;
      clamped = true;
    }
    rings[j] = resample_ring(clip_below(keyway, h), ring);
  }
  if (clamped)
    std::cerr << "build_blade_mesh: profile exceeds the keyway top, clamped\n";

  return sweep_mesh(xs, rings);
}

TriMesh attach_bow(const TriMesh& blade, const BowSpec& bow, const KeySpec& spec) {
  if (bow.outline.size() < 3) throw SpecInvalid("bow outline needs at least 3 vertices");
  if (bow.thickness_mm <= 0) throw SpecInvalid("bow thickness must be positive");
  if (bow.overlap_mm <= 0)
    throw NoOverlap("bow overlap must be positive to fuse with the blade");
  if (bow.overlap_mm >= bow.thickness_mm)
    throw SpecInvalid("bow overlap must be smaller than its thickness");

  // The prism must actually cover blade material in the cross-section
  // plane, otherwise the shells print as two loose parts.
  bool covers = false;
  for (const Vec2& p : spec.keyway)
    if (point_in_polygon(bow.outline, p)) {
      covers = true;
      break;
    }
  if (!covers)
    for (const Vec2& p : bow.outline)
      if (point_in_polygon(spec.keyway, p)) {
        covers = true;
        break;
      }
  if (!covers) throw NoOverlap("bow outline does not overlap the keyway cross-section");

  std::vector<Vec2> outline = dedupe(bow.outline);
  if (polygon_area(outline) < 0) std::reverse(outline.begin(), outline.end());

  TriMesh mesh = blade;
  mesh.append(sweep_mesh({-bow.thickness_mm + bow.overlap_mm, bow.overlap_mm},
                         {outline, outline}));
  return mesh;
}

void write_stl(const TriMesh& mesh, const std::string& path) {
  if (mesh.triangles.empty()) throw EmptyMesh("refusing to write an empty STL");

  std::string buf;
  buf.reserve(84 + mesh.triangles.size() * 50);
  std::string header = "keyforge";
  header.resize(80, '\0');
  buf += header;

  const uint32_t count = static_cast<uint32_t>(mesh.triangles.size());
  buf.push_back(static_cast<char>(count & 0xff));
  buf.push_back(static_cast<char>((count >> 8) & 0xff));
  buf.push_back(static_cast<char>((count >> 16) & 0xff));
  buf.push_back(static_cast<char>((count >> 24) & 0xff));

  for (const auto& t : mesh.triangles) {
    const Vec3 a = mesh.vertices[t[0]];
    const Vec3 b = mesh.vertices[t[1]];
    const Vec3 c = mesh.vertices[t[2]];
    Vec3 n = cross(sub(b, a), sub(c, a));
    const double len = norm(n);
    if (len > 0) {
      n = {n.x / len, n.y / len, n.z / len};
    } else {
      n = {0, 0, 0};
    }
    for (const Vec3& v : {n, a, b, c}) {
      store_f32_le(buf, static_cast<float>(v.x));
      store_f32_le(buf, static_cast<float>(v.y));
      store_f32_le(buf, static_cast<float>(v.z));
    }
    buf.push_back('\0');
    buf.push_back('\0');
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoFailure("short write to " + path);
}

TriMesh read_stl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 84) throw IoFailure(path + ": truncated STL header");

  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  const uint32_t count = load_u32_le(bytes + 80);
  if (data.size() != 84 + static_cast<size_t>(count) * 50)
    throw IoFailure(path + ": size does not match triangle count");

  TriMesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(count) * 3);
  mesh.triangles.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const unsigned char* rec = bytes + 84 + static_cast<size_t>(i) * 50;
    for (int v = 0; v < 3; ++v) {
      const unsigned char* p = rec + 12 + v * 12;
      mesh.vertices.push_back({load_f32_le(p), load_f32_le(p + 4), load_f32_le(p + 8)});
    }
    const int base = static_cast<int>(i) * 3;
    mesh.triangles.push_back({base, base + 1, base + 2});
  }
  return mesh;
}

MeshDiagnostics mesh_diagnostics(const TriMesh& mesh) {
  MeshDiagnostics d;

  // Weld coincident vertices so triangle soups (STL round-trips) and
  // indexed meshes measure alike.
  std::map<std::array<double, 3>, int> welded;
  std::vector<int> remap(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    auto [it, inserted] =
        welded.try_emplace({v.x, v.y, v.z}, static_cast<int>(welded.size()));
    remap[i] = it->second;
  }

  double vol6 = 0.0;
  std::unordered_map<uint64_t, int> edge_count;
  edge_count.reserve(mesh.triangles.size() * 3);
  auto edge_key = [](int a, int b) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
           static_cast<uint32_t>(b);
  };

  std::vector<uint8_t> vertex_used(welded.size(), 0);
  for (const auto& t : mesh.triangles) {
    const Vec3 a = mesh.vertices[t[0]];
    const Vec3 b = mesh.vertices[t[1]];
    const Vec3 c = mesh.vertices[t[2]];
    vol6 += dot(a, cross(b, c));
    if (norm(cross(sub(b, a), sub(c, a))) < 1e-12) ++d.degenerate_triangles;

    const int ia = remap[t[0]], ib = remap[t[1]], ic = remap[t[2]];
    vertex_used[ia] = vertex_used[ib] = vertex_used[ic] = 1;
    ++edge_count[edge_key(ia, ib)];
    ++edge_count[edge_key(ib, ic)];
    ++edge_count[edge_key(ic, ia)];
  }
  d.volume_mm3 = vol6 / 6.0;

  d.watertight = !mesh.triangles.empty();
  size_t undirected_edges = 0;
  for (const auto& [key, count] : edge_count) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    if (count != 1) d.watertight = false;
    auto rev = edge_count.find(edge_key(b, a));
    if (rev == edge_count.end()) d.watertight = false;
    if (a < b) ++undirected_edges;
  }

  int used = 0;
  for (uint8_t u : vertex_used) used += u;
  d.euler = used - static_cast<int>(undirected_edges) + static_cast<int>(mesh.triangles.size());

  // Shells: connected components of triangles over shared undirected edges.
  std::vector<int> parent(mesh.triangles.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::unordered_map<uint64_t, int> edge_owner;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const int idx[3] = {remap[t[0]], remap[t[1]], remap[t[2]]};
    for (int e = 0; e < 3; ++e) {
      const int a = std::min(idx[e], idx[(e + 1) % 3]);
      const int b = std::max(idx[e], idx[(e + 1) % 3]);
      auto [it, inserted] = edge_owner.try_emplace(edge_key(a, b), static_cast<int>(i));
      if (!inserted) parent[find(static_cast<int>(i))] = find(it->second);
    }
  }
  int shells = 0;
  for (size_t i = 0; i < mesh.triangles.size(); ++i)
    if (find(static_cast<int>(i)) == static_cast<int>(i)) ++shells;
  d.shells = shells;

  return d;
}

void emit_csg_script(const KeySpec& spec, const HeightProfile& profile, const BowSpec& bow,
                     const std::string& path) {
  double keyway_umax = spec.keyway.front().x;
  for (const Vec2& p : spec.keyway) keyway_umax = std::max(keyway_umax, p.x);
  const double top = spec.blade_height_mm + 1.0;
  const double cut_depth = keyway_umax + 2.0;

  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);

  auto poly2d = [&](const std::vector<Vec2>& pts) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(6);
    s << "polygon(points=[";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) s << ",";
      s << "[" << pts[i].x << "," << pts[i].y << "]";
    }
    s << "]);";
    return s.str();
  };

  // Blade axis is z; the bitting cut is the profile complement extruded
  // across the keyway width.
  std::vector<Vec2> cut_poly;
  for (const auto& k : profile.knots) cut_poly.push_back({k.x, k.h});
  cut_poly.push_back({spec.blade_length_mm, top});
  cut_poly.push_back({0.0, top});

  out << "// keyforge key model (units mm, blade axis = z)\n";
  out << "union() {\n";
  out << "  difference() {\n";
  out << "    linear_extrude(height=" << spec.blade_length_mm << ") " << poly2d(spec.keyway)
      << "\n";
  out << "    translate([" << keyway_umax + 1.0 << ",0,0]) rotate([0,-90,0]) "
      << "linear_extrude(height=" << cut_depth << ") " << poly2d(cut_poly) << "\n";
  out << "  }\n";
  out << "  translate([0,0," << -bow.thickness_mm + bow.overlap_mm << "]) "
      << "linear_extrude(height=" << bow.thickness_mm << ") " << poly2d(bow.outline) << "\n";
  out << "}\n";

  std::ofstream file(path);
  if (!file) throw IoFailure("cannot open " + path + " for writing");
  file << out.str();
  if (!file) throw IoFailure("short write to " + path);
}

}  // namespace keyforge
