#pragma once

#include <array>
#include <string>
#include <vector>

#include "keyforge/image.hpp"
#include "keyforge/keyspec.hpp"

namespace keyforge {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

/// Piecewise-linear bitting height h(x) in mm over x in [0, blade_length];
/// constant extension outside the knot range.
struct HeightProfile {
  struct Knot {
    double x;
    double h;
  };
  std::vector<Knot> knots;  // strictly increasing in x

  double value(double x) const;
  static HeightProfile constant(double h, double length);
  static HeightProfile from_code(const BittingCode& code, const KeySpec& spec,
                                 double root_width_mm = 0.8);
};

/// Indexed triangle mesh in mm, CCW outward winding.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  void append(const TriMesh& other);
};

/// Key bow as a prism shell across the blade base; the outline lives in
/// the keyway (u,v) plane and the prism spans
/// x in [-thickness+overlap, overlap].
struct BowSpec {
  std::vector<Vec2> outline;  // simple polygon, mm
  double thickness_mm = 2.5;
  double overlap_mm = 1.5;

  static BowSpec default_bow();
};

struct MeshDiagnostics {
  bool watertight = false;
  double volume_mm3 = 0.0;
  int euler = 0;       // V - E + F over the whole complex (2 per closed shell)
  int degenerate_triangles = 0;
  int shells = 0;
};

/// Upper-envelope height profile from traced boundary points, mapped to mm
/// by the similarity pinned at shoulder -> x=0 and tip -> x=blade_length.
HeightProfile bitting_height_profile(const std::vector<PixelCoord>& boundary,
                                     const Keypoints& keypoints, const KeySpec& spec,
                                     int stations = 256);

/// Sweep the keyway along the blade, clipping each cross-section by
/// v <= h(x). Watertight, positive volume. Throws ClipNotSimple when a
/// clip yields zero or several polygons.
TriMesh build_blade_mesh(const KeySpec& spec, const HeightProfile& profile, int stations = 256,
                         int ring = 128);

/// Adds the bow as a second overlapping shell. Throws NoOverlap when the
/// placement leaves a gap.
TriMesh attach_bow(const TriMesh& blade, const BowSpec& bow, const KeySpec& spec);

// Binary STL, bit-exact format: 80-byte "keyforge" header, u32 LE triangle
// count, per triangle 12 LE f32 (normal + 3 vertices) and a zero u16.
void write_stl(const TriMesh& mesh, const std::string& path);
TriMesh read_stl(const std::string& path);

MeshDiagnostics mesh_diagnostics(const TriMesh& mesh);

/// Text CSG program (linear extrusions, one union, one difference) that
/// rebuilds the same solid; deterministic for identical inputs.
void emit_csg_script(const KeySpec& spec, const HeightProfile& profile, const BowSpec& bow,
                     const std::string& path);

}  // namespace keyforge
