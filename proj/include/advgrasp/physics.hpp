#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "advgrasp/error.hpp"
#include "advgrasp/geometry.hpp"
#include "advgrasp/rng.hpp"

namespace advgrasp {

struct GripperConfig {
  double jaw_open_width = 0.12;
  double jaw_length = 0.04;
  double normal_force = 10.0;
  double gravity = 9.81;
};

inline void validate(const GripperConfig& g) {
  if (!(g.jaw_open_width > 0 && g.jaw_length > 0 && g.normal_force > 0 && g.gravity > 0))
    throw Error(ErrorCode::INVALID_CONFIG, "gripper parameters must be positive");
}

inline void to_json(nlohmann::json& j, const GripperConfig& g) {
  j = {{"jaw_open_width", g.jaw_open_width},
       {"jaw_length", g.jaw_length},
       {"normal_force", g.normal_force},
       {"gravity", g.gravity}};
}

inline void from_json(const nlohmann::json& j, GripperConfig& g) {
  g = GripperConfig{};
  g.jaw_open_width = j.value("jaw_open_width", g.jaw_open_width);
  g.jaw_length = j.value("jaw_length", g.jaw_length);
  g.normal_force = j.value("normal_force", g.normal_force);
  g.gravity = j.value("gravity", g.gravity);
}

// Maps any angle onto [0, pi): a parallel-jaw grasp equals its half-turn.
inline double canonical_grasp_angle(double theta) {
  double r = std::fmod(theta, std::numbers::pi);
  if (r < 0.0) r += std::numbers::pi;
  if (r >= std::numbers::pi) r = 0.0;
  return r;
}

struct GraspAction {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // closing-axis direction in [0, pi)

  GraspAction() = default;
  GraspAction(double x_, double y_, double theta_) : x(x_), y(y_), theta(canonical_grasp_angle(theta_)) {}

  Vec2 center() const { return {x, y}; }
  Vec2 axis() const { return unit_from_angle(theta); }
  friend bool operator==(const GraspAction&, const GraspAction&) = default;
};

struct GraspState {
  bool success = false;
  std::optional<std::pair<Contact, Contact>> contacts;  // (negative-side jaw, positive-side jaw)
  GraspAction grasp;
  std::string object_ref;
  Vec2 com_offset;
};

enum class Direction : std::uint8_t { POS_X, NEG_X, POS_Y, NEG_Y, UP, DOWN };

inline constexpr std::array<Direction, 6> kAllDirections = {Direction::POS_X, Direction::NEG_X, Direction::POS_Y,
                                                           Direction::NEG_Y, Direction::UP,    Direction::DOWN};

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::POS_X: return "POS_X";
    case Direction::NEG_X: return "NEG_X";
    case Direction::POS_Y: return "POS_Y";
    case Direction::NEG_Y: return "NEG_Y";
    case Direction::UP: return "UP";
    case Direction::DOWN: return "DOWN";
  }
  return "?";
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  for (Direction d : kAllDirections) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

inline std::size_t index_of(Direction d) { return static_cast<std::size_t>(d); }

struct DisturbanceAction {
  Direction direction = Direction::POS_X;
  double magnitude = 1.0;
};

enum class LimitingConstraint : std::uint8_t { FRICTION, TORQUE, AXIAL, NONE };

inline std::string_view to_string(LimitingConstraint c) {
  switch (c) {
    case LimitingConstraint::FRICTION: return "FRICTION";
    case LimitingConstraint::TORQUE: return "TORQUE";
    case LimitingConstraint::AXIAL: return "AXIAL";
    case LimitingConstraint::NONE: return "NONE";
  }
  return "?";
}

struct DisturbanceOutcome {
  bool withstood = true;
  LimitingConstraint limiting_constraint = LimitingConstraint::NONE;
};

namespace detail {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};
inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot3(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross3(Vec3 a, Vec3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
inline double norm3(Vec3 a) { return std::sqrt(dot3(a, a)); }

inline Vec3 unit_vector(Direction d) {
  switch (d) {
    case Direction::POS_X: return {1, 0, 0};
    case Direction::NEG_X: return {-1, 0, 0};
    case Direction::POS_Y: return {0, 1, 0};
    case Direction::NEG_Y: return {0, -1, 0};
    case Direction::UP: return {0, 0, 1};
    case Direction::DOWN: return {0, 0, -1};
  }
  return {};
}

inline double angle_between(Vec2 a, Vec2 b) { return std::acos(std::clamp(dot(a, b), -1.0, 1.0)); }

}  // namespace detail

// Per-constraint force limits for one direction; infinity means unconstrained.
struct CapacityBreakdown {
  double friction = std::numeric_limits<double>::infinity();
  double torque = std::numeric_limits<double>::infinity();
  double axial = std::numeric_limits<double>::infinity();

  double capacity() const { return std::min({friction, torque, axial}); }
};

inline constexpr int kJawSamples = 9;
inline constexpr double kMinContactSeparation = 1e-4;

// Closes two jaws toward the grasp center and tests the antipodal friction-cone condition.
inline GraspState attempt_grasp(const ObjectShape& object, const Pose2& pose, const GraspAction& grasp,
                                const GripperConfig& g) {
  validate(object);
  if (!std::isfinite(grasp.x) || !std::isfinite(grasp.y) || !std::isfinite(grasp.theta))
    throw Error(ErrorCode::PRECONDITION_VIOLATION, "grasp must be finite");

  const ObjectShape world = transformed(object, pose);
  GraspState state;
  state.grasp = grasp;
  state.object_ref = object.name;
  state.com_offset = grasp.center() - centroid(world);

  const Vec2 axis = grasp.axis();
  const Vec2 side{-axis.y, axis.x};
  const double half_open = 0.5 * g.jaw_open_width;

  // sign -1: jaw starts on the negative side and travels along +axis.
  auto close_jaw = [&](double sign) -> std::optional<Contact> {
    const Vec2 jaw_center = grasp.center() + (sign * half_open) * axis;
    const Vec2 travel = (-sign) * axis;
    std::optional<SegmentHit> nearest;
    for (int i = 0; i < kJawSamples; ++i) {
      const double s = g.jaw_length * (static_cast<double>(i) / (kJawSamples - 1) - 0.5);
      const Vec2 origin = jaw_center + s * side;
      if (contains(world, origin)) return std::nullopt;  // jaw lands on the object
      auto hit = segment_hit(world, origin, travel, half_open);
      if (hit && (!nearest || hit->t < nearest->t)) nearest = hit;
    }
    if (!nearest) return std::nullopt;
    return nearest->contact;
  };

  const auto neg = close_jaw(-1.0);
  const auto pos = close_jaw(+1.0);
  if (!neg || !pos) return state;
  state.contacts = std::make_pair(*neg, *pos);

  const double cone = std::atan(object.mu) + 1e-12;
  const bool neg_ok = detail::angle_between(neg->normal, -axis) <= cone;
  const bool pos_ok = detail::angle_between(pos->normal, axis) <= cone;
  const bool separated = norm(pos->point - neg->point) > kMinContactSeparation;
  state.success = neg_ok && pos_ok && separated;
  return state;
}

// Closed-form capacity of each constraint against a disturbance along `direction`.
inline CapacityBreakdown capacity_breakdown(const GraspState& state, const ObjectShape& object,
                                            const GripperConfig& g, Direction direction) {
  using namespace detail;
  if (!state.success) throw Error(ErrorCode::NOT_GRASPED, "disturbance requires a successful grasp");

  const Vec2 a2 = state.grasp.axis();
  const Vec3 axis{a2.x, a2.y, 0.0};
  const Vec3 dir = unit_vector(direction);
  const Vec3 weight{0.0, 0.0, -object.mass * g.gravity};
  const double friction_limit = 2.0 * object.mu * g.normal_force;
  const double torque_limit = object.mu * g.normal_force * g.jaw_length / 2.0;
  constexpr double inf = std::numeric_limits<double>::infinity();

  CapacityBreakdown out;

  // Axial: the clamp force alone resists pulls along the closing axis.
  const double axial_part = std::abs(dot3(dir, axis));
  out.axial = axial_part > 1e-12 ? g.normal_force / axial_part : inf;

  // Friction: |F*t + w| <= 2*mu*Nc, with t the transverse part of the unit direction.
  const Vec3 t = dir - dot3(dir, axis) * axis;
  const double tt = dot3(t, t);
  const double tw = dot3(t, weight);
  const double ww = dot3(weight, weight);
  const double cc = friction_limit * friction_limit;
  if (ww > cc) {
    out.friction = 0.0;  // cannot even carry its own weight
  } else if (tt < 1e-24) {
    out.friction = inf;
  } else {
    const double disc = tw * tw - tt * (ww - cc);
    out.friction = (-tw + std::sqrt(std::max(disc, 0.0))) / tt;
  }

  // Torque about the grasp center: |r x F| <= mu*Nc*jaw_length/2.
  const Vec3 r{state.com_offset.x, state.com_offset.y, 0.0};
  const double lever = norm3(cross3(r, dir));
  out.torque = lever > 1e-15 ? torque_limit / lever : inf;
  return out;
}

inline double resist_capacity(const GraspState& state, const ObjectShape& object, const GripperConfig& g,
                              Direction direction) {
  return capacity_breakdown(state, object, g, direction).capacity();
}

inline DisturbanceOutcome apply_disturbance(const GraspState& state, const ObjectShape& object,
                                            const GripperConfig& g, const DisturbanceAction& action) {
  if (!(action.magnitude > 0.0)) throw Error(ErrorCode::PRECONDITION_VIOLATION, "magnitude must be positive");
  const CapacityBreakdown cap = capacity_breakdown(state, object, g, action.direction);
  if (action.magnitude > cap.friction) return {false, LimitingConstraint::FRICTION};
  if (action.magnitude > cap.torque) return {false, LimitingConstraint::TORQUE};
  if (action.magnitude > cap.axial) return {false, LimitingConstraint::AXIAL};
  return {true, LimitingConstraint::NONE};
}

inline double min_capacity(const GraspState& state, const ObjectShape& object, const GripperConfig& g) {
  double c = std::numeric_limits<double>::infinity();
  for (Direction d : kAllDirections) c = std::min(c, resist_capacity(state, object, g, d));
  return c;
}

struct Calibration {
  double force = 0.0;
  std::vector<double> capacities;  // sorted ascending minimum capacities of the sampled grasps
  std::size_t attempts = 0;
};

namespace detail {
inline double median_of(const std::vector<double>& sorted, std::size_t first, std::size_t count) {
  const std::size_t mid = first + count / 2;
  if (count % 2 == 1) return sorted[mid];
  return 0.5 * (sorted[mid - 1] + sorted[mid]);
}
}  // namespace detail

// Samples random successful grasps in the object frame and splits the capacity
// distribution between its weak and strong terciles.
inline Calibration calibrate(const ObjectShape& object, const GripperConfig& g, std::size_t n_samples,
                             std::uint64_t rng_seed) {
  if (n_samples < 100) throw Error(ErrorCode::PRECONDITION_VIOLATION, "calibration needs at least 100 samples");
  validate(object);
  Rng rng(rng_seed);
  const BoundingBox box = bounding_box(object);
  const Pose2 identity;
  Calibration cal;
  const std::size_t max_attempts = 100 * n_samples;
  while (cal.capacities.size() < n_samples && cal.attempts < max_attempts) {
    ++cal.attempts;
    const GraspAction grasp(rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                            rng.uniform(0.0, std::numbers::pi));
    const GraspState state = attempt_grasp(object, identity, grasp, g);
    if (state.success) cal.capacities.push_back(min_capacity(state, object, g));
  }
  if (cal.capacities.size() < 10)
    throw Error(ErrorCode::NO_VALID_GRASPS, "only " + std::to_string(cal.capacities.size()) +
                                                " successful grasps on '" + object.name + "'");
  std::sort(cal.capacities.begin(), cal.capacities.end());
  const std::size_t n = cal.capacities.size();
  const std::size_t third = std::max<std::size_t>(1, n / 3);
  const double weak = detail::median_of(cal.capacities, 0, third);
  const double strong = detail::median_of(cal.capacities, n - third, third);
  cal.force = 0.5 * (weak + strong);
  return cal;
}

inline double calibrate_force(const ObjectShape& object, const GripperConfig& g, std::size_t n_samples,
                              std::uint64_t rng_seed) {
  return calibrate(object, g, n_samples, rng_seed).force;
}

}  // namespace advgrasp
