#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "advgrasp/error.hpp"

namespace advgrasp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 normalized(Vec2 a) {
  const double n = norm(a);
  return {a.x / n, a.y / n};
}
inline Vec2 rotate(Vec2 a, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}
inline Vec2 unit_from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

// Wraps an angle into [-pi, pi).
inline double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(theta + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= std::numbers::pi;
  if (r >= std::numbers::pi) r -= two_pi;
  return r;
}

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

  Vec2 apply(Vec2 p) const { return rotate(p, theta) + Vec2{x, y}; }
  Vec2 apply_inverse(Vec2 p) const { return rotate(p - Vec2{x, y}, -theta); }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

using Polygon = std::vector<Vec2>;

struct ObjectShape {
  std::string name;
  double mu = 0.5;
  double mass = 0.1;
  std::vector<Polygon> parts;
};

struct Contact {
  Vec2 point;
  Vec2 normal;  // unit, pointing out of the object
};

struct SegmentHit {
  Contact contact;
  double t = 0.0;
  std::size_t part = 0;
  std::size_t edge = 0;
};

namespace geom_tol {
inline constexpr double kBoundary = 1e-6;
inline constexpr double kMinArea = 1e-9;
inline constexpr double kCross = 1e-12;
}  // namespace geom_tol

inline double signed_area(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    a += cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * a;
}

inline Vec2 polygon_centroid(const Polygon& poly) {
  double a = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % poly.size()];
    const double c = cross(p, q);
    a += c;
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  a *= 0.5;
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

inline bool is_convex_ccw(const Polygon& poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = poly[(i + 1) % n] - poly[i];
    const Vec2 e1 = poly[(i + 2) % n] - poly[(i + 1) % n];
    if (cross(e0, e1) < -geom_tol::kCross) return false;
  }
  return true;
}

// Throws INVALID_SHAPE describing the first violated invariant.
inline void validate(const ObjectShape& shape) {
  if (shape.parts.empty()) throw Error(ErrorCode::INVALID_SHAPE, "'" + shape.name + "' has no parts");
  if (!(shape.mu > 0.0) || !std::isfinite(shape.mu))
    throw Error(ErrorCode::INVALID_SHAPE, "'" + shape.name + "' friction must be positive");
  if (!(shape.mass > 0.0) || !std::isfinite(shape.mass))
    throw Error(ErrorCode::INVALID_SHAPE, "'" + shape.name + "' mass must be positive");
  for (std::size_t k = 0; k < shape.parts.size(); ++k) {
    const Polygon& poly = shape.parts[k];
    const std::string where = "'" + shape.name + "' part " + std::to_string(k);
    if (poly.size() < 3) throw Error(ErrorCode::INVALID_SHAPE, where + " has fewer than 3 vertices");
    for (const Vec2& v : poly) {
      if (!std::isfinite(v.x) || !std::isfinite(v.y))
        throw Error(ErrorCode::INVALID_SHAPE, where + " has a non-finite vertex");
    }
    if (signed_area(poly) <= geom_tol::kMinArea)
      throw Error(ErrorCode::INVALID_SHAPE, where + " is degenerate or clockwise");
    if (!is_convex_ccw(poly)) throw Error(ErrorCode::INVALID_SHAPE, where + " is not convex");
  }
}

// Closed containment: boundary points count as inside.
inline bool contains(const Polygon& poly, Vec2 p) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    if (cross(b - a, p - a) < -geom_tol::kCross) return false;
  }
  return true;
}

inline bool contains(const ObjectShape& shape, Vec2 p) {
  return std::any_of(shape.parts.begin(), shape.parts.end(),
                     [&](const Polygon& poly) { return contains(poly, p); });
}

// Nearest boundary crossing of origin + t*dir for t in (0, max_t].
// Ties resolve to the smallest t, then lowest part index, then lowest edge index.
inline std::optional<SegmentHit> segment_hit(const ObjectShape& shape, Vec2 origin, Vec2 dir, double max_t) {
  std::optional<SegmentHit> best;
  constexpr double kParam = 1e-12;
  for (std::size_t k = 0; k < shape.parts.size(); ++k) {
    const Polygon& poly = shape.parts[k];
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = poly[i];
      const Vec2 e = poly[(i + 1) % n] - a;
      const double denom = cross(dir, e);
      if (std::abs(denom) < 1e-15) continue;
      const Vec2 ao = a - origin;
      const double t = cross(ao, e) / denom;
      const double u = cross(ao, dir) / denom;
      if (!(t > 0.0) || t > max_t) continue;
      if (u < -kParam || u > 1.0 + kParam) continue;
      if (best && !(t < best->t)) continue;
      const double len = norm(e);
      SegmentHit hit;
      hit.t = t;
      hit.part = k;
      hit.edge = i;
      hit.contact.point = origin + t * dir;
      hit.contact.normal = {e.y / len, -e.x / len};
      best = hit;
    }
  }
  return best;
}

inline std::optional<Contact> segment_contact(const ObjectShape& shape, Vec2 origin, Vec2 dir, double max_t) {
  if (auto hit = segment_hit(shape, origin, dir, max_t)) return hit->contact;
  return std::nullopt;
}

inline double area(const ObjectShape& shape) {
  double a = 0.0;
  for (const Polygon& poly : shape.parts) a += signed_area(poly);
  return a;
}

// Area-weighted centroid; parts are assumed to have disjoint interiors.
inline Vec2 centroid(const ObjectShape& shape) {
  double total = 0.0;
  Vec2 acc;
  for (const Polygon& poly : shape.parts) {
    const double a = signed_area(poly);
    acc = acc + a * polygon_centroid(poly);
    total += a;
  }
  return (1.0 / total) * acc;
}

inline ObjectShape transformed(const ObjectShape& shape, const Pose2& pose) {
  ObjectShape out = shape;
  for (Polygon& poly : out.parts) {
    for (Vec2& v : poly) v = pose.apply(v);
  }
  return out;
}

struct BoundingBox {
  Vec2 lo;
  Vec2 hi;
};

inline BoundingBox bounding_box(const ObjectShape& shape) {
  BoundingBox box{{INFINITY, INFINITY}, {-INFINITY, -INFINITY}};
  for (const Polygon& poly : shape.parts) {
    for (const Vec2& v : poly) {
      box.lo = {std::min(box.lo.x, v.x), std::min(box.lo.y, v.y)};
      box.hi = {std::max(box.hi.x, v.x), std::max(box.hi.y, v.y)};
    }
  }
  return box;
}

// Largest distance from `about` to any vertex.
inline double bounding_radius(const ObjectShape& shape, Vec2 about) {
  double r = 0.0;
  for (const Polygon& poly : shape.parts) {
    for (const Vec2& v : poly) r = std::max(r, norm(v - about));
  }
  return r;
}

// ---- JSON: { "name", "mu", "mass", "parts": [[[x,y],...], ...] } ----

inline void to_json(nlohmann::json& j, const ObjectShape& shape) {
  nlohmann::json parts = nlohmann::json::array();
  for (const Polygon& poly : shape.parts) {
    nlohmann::json pts = nlohmann::json::array();
    for (const Vec2& v : poly) pts.push_back({v.x, v.y});
    parts.push_back(std::move(pts));
  }
  j = nlohmann::json{{"name", shape.name}, {"mu", shape.mu}, {"mass", shape.mass}, {"parts", std::move(parts)}};
}

inline void from_json(const nlohmann::json& j, ObjectShape& shape) {
  shape.name = j.at("name").get<std::string>();
  shape.mu = j.at("mu").get<double>();
  shape.mass = j.at("mass").get<double>();
  shape.parts.clear();
  for (const auto& part : j.at("parts")) {
    Polygon poly;
    for (const auto& pt : part) {
      if (!pt.is_array() || pt.size() != 2) throw Error(ErrorCode::PARSE, "vertex must be [x, y]");
      poly.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    shape.parts.push_back(std::move(poly));
  }
}

inline ObjectShape parse_object(const std::string& text) {
  ObjectShape shape;
  try {
    shape = nlohmann::json::parse(text).get<ObjectShape>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::PARSE, std::string("object file: ") + e.what());
  }
  validate(shape);
  return shape;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IO, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::IO, "write failed for " + path);
}

inline ObjectShape load_object(const std::string& path) { return parse_object(read_text_file(path)); }

}  // namespace advgrasp
