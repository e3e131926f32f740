#pragma once

#include <string>
#include <vector>

#include "keyforge/image.hpp"

namespace keyforge {

/// Manufacturer depth chart. Index k (0 = shallowest cut) leaves
/// `shallowest_mm - k * increment_mm` of material above the baseline.
struct DepthChart {
  int num_depths = 10;
  double shallowest_mm = 8.0;
  double increment_mm = 0.6;

  double depth_height_mm(int k) const { return shallowest_mm - k * increment_mm; }
};

/// Ordered cut depths, one per pin; the key's secret.
struct BittingCode {
  std::vector<int> depths;

  std::string to_string() const;                    // "2-4-0-7-5"
  static BittingCode parse(const std::string& s);   // throws SpecInvalid
  bool operator==(const BittingCode&) const = default;
};

/// Public manufacturer data for one key type. The keyway polygon is the
/// blade cross-section in mm with the v axis vertical (v=0 at the blade
/// baseline); pin positions are distances from the shoulder.
struct KeySpec {
  std::string name;
  std::vector<Vec2> keyway;  // simple polygon, (u, v) in mm
  double blade_length_mm = 30.0;
  double blade_height_mm = 9.5;
  std::vector<double> pin_positions_mm;
  DepthChart depth_chart;
  int macs = 7;

  int pin_count() const { return static_cast<int>(pin_positions_mm.size()); }

  void validate() const;  // throws SpecInvalid on any broken invariant

  static KeySpec default_spec();
  static KeySpec from_json(const std::string& text);
  static KeySpec load(const std::string& path);
  std::string to_json() const;
};

double polygon_area(const std::vector<Vec2>& poly);  // signed, shoelace
bool polygon_is_simple(const std::vector<Vec2>& poly);
bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p);

}  // namespace keyforge
