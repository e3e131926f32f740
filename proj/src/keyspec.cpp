#include "keyforge/keyspec.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "keyforge/errors.hpp"

namespace keyforge {

std::string BittingCode::to_string() const {
  std::ostringstream out;
  for (size_t i = 0; i < depths.size(); ++i) {
    if (i) out << '-';
    out << depths[i];
  }
  return out.str();
}

BittingCode BittingCode::parse(const std::string& s) {
  BittingCode code;
  std::string token;
  std::istringstream in(s);
  while (std::getline(in, token, '-')) {
    if (token.empty()) throw SpecInvalid("empty bitting digit in '" + s + "'");
    size_t pos = 0;
    int d;
    try {
      d = std::stoi(token, &pos);
    } catch (const std::exception&) {
      throw SpecInvalid("bad bitting digit '" + token + "'");
    }
    if (pos != token.size() || d < 0) throw SpecInvalid("bad bitting digit '" + token + "'");
    code.depths.push_back(d);
  }
  if (code.depths.empty()) throw SpecInvalid("empty bitting code");
  return code;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double s = 0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

namespace {

bool segments_properly_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto cross = [](Vec2 o, Vec2 p, Vec2 q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

bool polygon_is_simple(const std::vector<Vec2>& poly) {
  const size_t n = poly.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // skip adjacent edges (they share an endpoint)
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_properly_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        return false;
    }
  }
  return true;
}

bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double t = (p.y - a.y) / (b.y - a.y);
      if (p.x < a.x + t * (b.x - a.x)) inside = !inside;
    }
  }
  return inside;
}

void KeySpec::validate() const {
  if (keyway.size() < 3) throw SpecInvalid("keyway polygon needs at least 3 vertices");
  if (!polygon_is_simple(keyway)) throw SpecInvalid("keyway polygon self-intersects");
  if (std::abs(polygon_area(keyway)) <= 0.0) throw SpecInvalid("keyway polygon has zero area");
  if (blade_length_mm <= 0) throw SpecInvalid("blade_length_mm must be positive");
  if (blade_height_mm <= 0) throw SpecInvalid("blade_height_mm must be positive");
  if (pin_positions_mm.empty()) throw SpecInvalid("at least one pin position required");
  double prev = 0.0;
  for (double d : pin_positions_mm) {
    if (d <= prev || d >= blade_length_mm)
      throw SpecInvalid("pin positions must be strictly increasing inside (0, blade_length)");
    prev = d;
  }
  if (depth_chart.num_depths < 1) throw SpecInvalid("depth chart needs at least one depth");
  if (depth_chart.increment_mm <= 0) throw SpecInvalid("depth increment must be positive");
  if (depth_chart.depth_height_mm(depth_chart.num_depths - 1) <= 0)
    throw SpecInvalid("deepest cut would leave no material");
  if (macs < 0) throw SpecInvalid("macs must be non-negative");
}

KeySpec KeySpec::default_spec() {
  KeySpec s;
  s.name = "yale-classic-5";
  // One warded groove on the right flank; horizontally convex so every
  // bitting clip is a single simple polygon.
  s.keyway = {{0.0, 0.0}, {2.8, 0.0}, {2.8, 2.2}, {2.2, 3.0},
              {2.2, 4.0}, {2.8, 4.8}, {2.8, 9.5}, {0.0, 9.5}};
  s.blade_length_mm = 30.0;
  s.blade_height_mm = 9.5;
  s.pin_positions_mm = {4.0, 9.2, 14.4, 19.6, 24.8};
  s.depth_chart = DepthChart{10, 8.0, 0.6};
  s.macs = 7;
  s.validate();
  return s;
}

KeySpec KeySpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SpecInvalid(std::string("keyspec JSON parse error: ") + e.what());
  }
  KeySpec s;
  try {
    s.name = j.value("name", std::string("unnamed"));
    for (const auto& pt : j.at("keyway"))
      s.keyway.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    s.blade_length_mm = j.at("blade_length_mm").get<double>();
    s.blade_height_mm = j.at("blade_height_mm").get<double>();
    s.pin_positions_mm = j.at("pin_positions_mm").get<std::vector<double>>();
    const auto& chart = j.at("depth_chart");
    s.depth_chart.num_depths = chart.at("num_depths").get<int>();
    s.depth_chart.shallowest_mm = chart.at("shallowest_mm").get<double>();
    s.depth_chart.increment_mm = chart.at("increment_mm").get<double>();
    s.macs = j.at("macs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SpecInvalid(std::string("keyspec JSON missing field: ") + e.what());
  }
  s.validate();
  return s;
}

KeySpec KeySpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open keyspec " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string KeySpec::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  auto& kw = j["keyway"] = nlohmann::ordered_json::array();
  for (const Vec2& p : keyway) kw.push_back({p.x, p.y});
  j["blade_length_mm"] = blade_length_mm;
  j["blade_height_mm"] = blade_height_mm;
  j["pin_positions_mm"] = pin_positions_mm;
  j["depth_chart"] = {{"num_depths", depth_chart.num_depths},
                      {"shallowest_mm", depth_chart.shallowest_mm},
                      {"increment_mm", depth_chart.increment_mm}};
  j["macs"] = macs;
  return j.dump(2);
}

}  // namespace keyforge
