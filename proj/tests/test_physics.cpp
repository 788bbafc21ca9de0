#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "advgrasp/physics.hpp"
#include "advgrasp/rng.hpp"
#include "expect.hpp"
#include "support.hpp"

using namespace advgrasp;
using testing_support::box;
using testing_support::expect_code;

namespace {

const GripperConfig kDefault{};

// Direct check of the three constraints for a force of magnitude f along d.
bool satisfies_constraints(const GraspState& s, const ObjectShape& o, const GripperConfig& g, Direction d, double f) {
  const double dx[] = {1, -1, 0, 0, 0, 0};
  const double dy[] = {0, 0, 1, -1, 0, 0};
  const double dz[] = {0, 0, 0, 0, 1, -1};
  const std::size_t k = index_of(d);
  const double ax = std::cos(s.grasp.theta), ay = std::sin(s.grasp.theta);
  const double along = dx[k] * ax + dy[k] * ay;
  if (std::abs(f * along) > g.normal_force) return false;
  const double lx = f * (dx[k] - along * ax);
  const double ly = f * (dy[k] - along * ay);
  const double lz = f * dz[k] - o.mass * g.gravity;
  if (std::sqrt(lx * lx + ly * ly + lz * lz) > 2 * o.mu * g.normal_force) return false;
  const double rx = s.com_offset.x, ry = s.com_offset.y;
  const double tx = ry * dz[k] * f, ty = -rx * dz[k] * f, tz = (rx * dy[k] - ry * dx[k]) * f;
  return std::sqrt(tx * tx + ty * ty + tz * tz) <= o.mu * g.normal_force * g.jaw_length / 2;
}

double grid_capacity(const GraspState& s, const ObjectShape& o, const GripperConfig& g, Direction d, double step,
                     double max_f) {
  double best = 0.0;
  for (int i = 1; i * step <= max_f; ++i) {
    if (!satisfies_constraints(s, o, g, d, i * step)) break;
    best = i * step;
  }
  return best;
}

double bisect_threshold(const GraspState& s, const ObjectShape& o, const GripperConfig& g, Direction d) {
  double lo = 0.0, hi = 1e4;
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    if (mid > 0 && apply_disturbance(s, o, g, {d, mid}).withstood) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

ObjectShape mirrored(const ObjectShape& o, bool flip_x) {
  ObjectShape out = o;
  for (Polygon& poly : out.parts) {
    for (Vec2& v : poly) (flip_x ? v.x : v.y) = -(flip_x ? v.x : v.y);
    std::reverse(poly.begin(), poly.end());
  }
  return out;
}

struct Sample {
  ObjectShape object;
  GraspState state;
};

std::vector<Sample> random_successful_grasps(std::size_t n, std::uint64_t seed, bool axis_aligned = false) {
  std::vector<Sample> out;
  Rng rng(seed);
  const auto names = testing_support::object_names();
  while (out.size() < n) {
    const ObjectShape o = testing_support::load(names[rng.index(names.size())]);
    const BoundingBox b = bounding_box(o);
    const double theta = axis_aligned ? (rng.bernoulli(0.5) ? 0.0 : std::numbers::pi / 2) : rng.uniform(0, 3.2);
    const GraspAction a(rng.uniform(b.lo.x, b.hi.x), rng.uniform(b.lo.y, b.hi.y), theta);
    GraspState s = attempt_grasp(o, Pose2{}, a, kDefault);
    if (s.success) out.push_back({o, std::move(s)});
  }
  return out;
}

}  // namespace

TEST(AttemptGrasp, CenteredBarSucceeds) {
  const ObjectShape bar = box(0.02, 0.1, 0.6, 0.1, "bar");
  const GraspState s = attempt_grasp(bar, Pose2{}, GraspAction(0, 0, 0), kDefault);
  ASSERT_TRUE(s.success);
  ASSERT_TRUE(s.contacts);
  EXPECT_NEAR(s.contacts->first.point.x, -0.01, 1e-12);
  EXPECT_NEAR(s.contacts->second.point.x, 0.01, 1e-12);
  EXPECT_EQ(s.object_ref, "bar");
}

TEST(AttemptGrasp, FarAwayGraspHasNoContacts) {
  const GraspState s = attempt_grasp(box(0.02, 0.1), Pose2{}, GraspAction(1.0, 0.0, 0.3), kDefault);
  EXPECT_FALSE(s.success);
  EXPECT_FALSE(s.contacts);
}

TEST(AttemptGrasp, JawLandingOnObjectFails) {
  const GraspState s = attempt_grasp(box(0.3, 0.3), Pose2{}, GraspAction(0, 0, 0), kDefault);
  EXPECT_FALSE(s.success);
}

TEST(AttemptGrasp, SlantedEdgeObeysFrictionCone) {
  const double slant = std::numbers::pi / 6;
  const double dx = 0.1 * std::tan(slant);
  const Polygon poly{{-0.04, -0.05}, {0.0, -0.05}, {dx, 0.05}, {-0.04, 0.05}};
  // Outward normal of the slanted edge and its angle to the closing axis (+x).
  const Vec2 e{dx, 0.1};
  const double edge_angle = std::abs(std::atan2(-e.x, e.y));
  EXPECT_NEAR(edge_angle, slant, 1e-12);
  for (double mu : {0.3, 0.5, 0.6, 0.9}) {
    const ObjectShape o{"wedge", mu, 0.1, {poly}};
    const GraspState s = attempt_grasp(o, Pose2{}, GraspAction(0, 0, 0), kDefault);
    ASSERT_TRUE(s.contacts);
    EXPECT_EQ(s.success, edge_angle <= std::atan(mu)) << "mu=" << mu;
  }
}

TEST(AttemptGrasp, PoseMovesTheObject) {
  const ObjectShape bar = box(0.02, 0.1, 0.6);
  const Pose2 pose(0.1, -0.05, std::numbers::pi / 2);
  EXPECT_TRUE(attempt_grasp(bar, pose, GraspAction(0.1, -0.05, std::numbers::pi / 2), kDefault).success);
  EXPECT_FALSE(attempt_grasp(bar, pose, GraspAction(0, 0, 0), kDefault).success);
}

TEST(AttemptGrasp, InvalidInputs) {
  expect_code([] { attempt_grasp(ObjectShape{"bad", 0.5, 0.1, {}}, Pose2{}, GraspAction(), kDefault); },
              ErrorCode::INVALID_SHAPE);
  GraspAction nan_grasp;
  nan_grasp.x = std::nan("");
  expect_code([&] { attempt_grasp(box(0.02, 0.1), Pose2{}, nan_grasp, kDefault); },
              ErrorCode::PRECONDITION_VIOLATION);
}

TEST(AttemptGrasp, HalfTurnInvariance) {
  Rng rng(3);
  const auto names = testing_support::object_names();
  int successes = 0;
  for (int i = 0; i < 400; ++i) {
    const ObjectShape o = testing_support::load(names[i % names.size()]);
    const BoundingBox b = bounding_box(o);
    const double x = rng.uniform(b.lo.x, b.hi.x), y = rng.uniform(b.lo.y, b.hi.y), t = rng.uniform(0, 3.1);
    const GraspState s0 = attempt_grasp(o, Pose2{}, GraspAction(x, y, t), kDefault);
    const GraspState s1 = attempt_grasp(o, Pose2{}, GraspAction(x, y, t + std::numbers::pi), kDefault);
    EXPECT_NEAR(s0.grasp.theta, s1.grasp.theta, 1e-12);
    EXPECT_EQ(s0.success, s1.success);
    successes += s0.success;
  }
  EXPECT_GT(successes, 20);
}

TEST(Capacity, TransverseFrictionExample) {
  // Closing along y, so POS_X is purely transverse.
  const ObjectShape o = box(0.1, 0.02, 0.5, 0.1);
  const GraspState straight = attempt_grasp(o, Pose2{}, GraspAction(0, 0, std::numbers::pi / 2), kDefault);
  ASSERT_TRUE(straight.success);
  EXPECT_NEAR(straight.com_offset.x, 0.0, 1e-12);
  const double expected = std::sqrt(100.0 - 0.981 * 0.981);
  EXPECT_NEAR(expected, 9.9518, 1e-4);
  EXPECT_NEAR(resist_capacity(straight, o, kDefault, Direction::POS_X), expected, 1e-9);
  EXPECT_NEAR(bisect_threshold(straight, o, kDefault, Direction::POS_X), expected, 1e-6);
  EXPECT_DOUBLE_EQ(resist_capacity(straight, o, kDefault, Direction::POS_X),
                   resist_capacity(straight, o, kDefault, Direction::NEG_X));
  const DisturbanceOutcome out = apply_disturbance(straight, o, kDefault, {Direction::POS_X, 5.0});
  EXPECT_TRUE(out.withstood);
  EXPECT_EQ(out.limiting_constraint, LimitingConstraint::NONE);
}

TEST(Capacity, OffsetGraspIsTorqueLimited) {
  // Long bar grasped across, 5 cm to the right of its centroid.
  const ObjectShape bar = box(0.2, 0.02, 0.5, 0.1);
  const GraspAction offset(0.05, 0, std::numbers::pi / 2);
  const GraspState s = attempt_grasp(bar, Pose2{}, offset, kDefault);
  ASSERT_TRUE(s.success);
  EXPECT_NEAR(s.com_offset.x, 0.05, 1e-12);
  EXPECT_NEAR(s.com_offset.y, 0.0, 1e-12);

  // Default jaw_length 0.04: torque limit 0.5*10*0.04/2 = 0.1 N*m, so 0.1/0.05 = 2.0 N.
  const CapacityBreakdown b = capacity_breakdown(s, bar, kDefault, Direction::POS_Y);
  EXPECT_NEAR(b.torque, 2.0, 1e-12);
  EXPECT_NEAR(b.capacity(), 2.0, 1e-12);
  EXPECT_NEAR(grid_capacity(s, bar, kDefault, Direction::POS_Y, 1e-3, 20.0), 2.0, 1e-3 + 1e-9);

  // A 4 mm jaw brings the torque limit to 0.01 N*m and the capacity to 0.2 N.
  GripperConfig short_jaw;
  short_jaw.jaw_length = 0.004;
  const GraspState s2 = attempt_grasp(bar, Pose2{}, offset, short_jaw);
  ASSERT_TRUE(s2.success);
  EXPECT_NEAR(resist_capacity(s2, bar, short_jaw, Direction::POS_Y), 0.2, 1e-12);
  EXPECT_NEAR(grid_capacity(s2, bar, short_jaw, Direction::POS_Y, 1e-3, 20.0), 0.2, 1e-3 + 1e-9);
  const DisturbanceOutcome out = apply_disturbance(s2, bar, short_jaw, {Direction::POS_Y, 1.0});
  EXPECT_FALSE(out.withstood);
  EXPECT_EQ(out.limiting_constraint, LimitingConstraint::TORQUE);
}

TEST(Capacity, AxialPullIsClampLimited) {
  const ObjectShape bar = box(0.02, 0.1, 0.9, 0.1);
  const GraspState s = attempt_grasp(bar, Pose2{}, GraspAction(0, 0, 0), kDefault);
  ASSERT_TRUE(s.success);
  const CapacityBreakdown b = capacity_breakdown(s, bar, kDefault, Direction::POS_X);
  EXPECT_NEAR(b.axial, 10.0, 1e-12);
  EXPECT_EQ(apply_disturbance(s, bar, kDefault, {Direction::POS_X, 10.5}).limiting_constraint,
            LimitingConstraint::AXIAL);
  EXPECT_NEAR(grid_capacity(s, bar, kDefault, Direction::POS_X, 1e-3, 40.0), b.capacity(), 1e-3);
}

TEST(Capacity, BoundaryIsInclusive) {
  const ObjectShape o = box(0.1, 0.02, 0.5, 0.1);
  const GraspState s = attempt_grasp(o, Pose2{}, GraspAction(0, 0, std::numbers::pi / 2), kDefault);
  ASSERT_TRUE(s.success);
  for (Direction d : kAllDirections) {
    const double c = resist_capacity(s, o, kDefault, d);
    if (!std::isfinite(c) || c <= 0) continue;
    EXPECT_TRUE(apply_disturbance(s, o, kDefault, {d, c}).withstood) << to_string(d);
    EXPECT_FALSE(apply_disturbance(s, o, kDefault, {d, std::nextafter(c, INFINITY) * (1 + 1e-12)}).withstood);
  }
}

TEST(Capacity, Preconditions) {
  const ObjectShape o = box(0.02, 0.1);
  const GraspState ok = attempt_grasp(o, Pose2{}, GraspAction(0, 0, 0), kDefault);
  expect_code([&] { apply_disturbance(ok, o, kDefault, {Direction::UP, 0.0}); }, ErrorCode::PRECONDITION_VIOLATION);
  expect_code([&] { apply_disturbance(ok, o, kDefault, {Direction::UP, -1.0}); }, ErrorCode::PRECONDITION_VIOLATION);
  const GraspState miss = attempt_grasp(o, Pose2{}, GraspAction(1, 1, 0), kDefault);
  expect_code([&] { resist_capacity(miss, o, kDefault, Direction::UP); }, ErrorCode::NOT_GRASPED);
  expect_code([&] { apply_disturbance(miss, o, kDefault, {Direction::UP, 1.0}); }, ErrorCode::NOT_GRASPED);
}

TEST(Capacity, TooHeavyToHoldHasZeroCapacity) {
  const ObjectShape lead = box(0.02, 0.1, 0.5, 2.0);
  const GraspState s = attempt_grasp(lead, Pose2{}, GraspAction(0, 0, 0), kDefault);
  ASSERT_TRUE(s.success);
  for (Direction d : kAllDirections) {
    EXPECT_EQ(resist_capacity(s, lead, kDefault, d), 0.0);
    EXPECT_EQ(grid_capacity(s, lead, kDefault, d, 1e-3, 1.0), 0.0);
  }
}

TEST(Capacity, RandomGraspsMatchConstraintOracle) {
  for (const Sample& smp : random_successful_grasps(100, 11)) {
    for (Direction d : kAllDirections) {
      const double c = resist_capacity(smp.state, smp.object, kDefault, d);
      ASSERT_TRUE(std::isfinite(c));
      EXPECT_NEAR(bisect_threshold(smp.state, smp.object, kDefault, d), c, 1e-6);
      EXPECT_TRUE(satisfies_constraints(smp.state, smp.object, kDefault, d, c * (1 - 1e-9)));
      EXPECT_FALSE(satisfies_constraints(smp.state, smp.object, kDefault, d, c * (1 + 1e-9) + 1e-12));
    }
  }
}

TEST(Capacity, WithstandIsMonotoneInMagnitude) {
  for (const Sample& smp : random_successful_grasps(30, 12)) {
    for (Direction d : kAllDirections) {
      bool prev = true;
      for (double f = 0.05; f < 30.0; f += 0.05) {
        const bool w = apply_disturbance(smp.state, smp.object, kDefault, {d, f}).withstood;
        EXPECT_FALSE(w && !prev);
        prev = w;
      }
    }
  }
}

TEST(Capacity, UpResistsAtLeastAsMuchAsDown) {
  for (const Sample& smp : random_successful_grasps(100, 13)) {
    EXPECT_GE(resist_capacity(smp.state, smp.object, kDefault, Direction::UP),
              resist_capacity(smp.state, smp.object, kDefault, Direction::DOWN));
  }
}

TEST(Capacity, MirrorSymmetryAcrossClosingAxis) {
  for (const Sample& smp : random_successful_grasps(60, 14, true)) {
    const bool along_x = smp.state.grasp.theta < 1.0;
    // Reflect across the closing axis through the grasp centre.
    const bool flip_x = !along_x;
    const Vec2 c = smp.state.grasp.center();
    ObjectShape shifted = transformed(smp.object, Pose2(-c.x, -c.y, 0));
    const ObjectShape reflected = mirrored(shifted, flip_x);
    const GraspState a = attempt_grasp(shifted, Pose2{}, GraspAction(0, 0, smp.state.grasp.theta), kDefault);
    const GraspState b = attempt_grasp(reflected, Pose2{}, GraspAction(0, 0, smp.state.grasp.theta), kDefault);
    ASSERT_TRUE(a.success);
    ASSERT_EQ(a.success, b.success);
    if (!b.success) continue;
    for (Direction d : kAllDirections) {
      Direction m = d;
      if (flip_x && (d == Direction::POS_X || d == Direction::NEG_X))
        m = d == Direction::POS_X ? Direction::NEG_X : Direction::POS_X;
      if (!flip_x && (d == Direction::POS_Y || d == Direction::NEG_Y))
        m = d == Direction::POS_Y ? Direction::NEG_Y : Direction::POS_Y;
      EXPECT_NEAR(resist_capacity(a, shifted, kDefault, d), resist_capacity(b, reflected, kDefault, m), 1e-9);
    }
  }
}

TEST(Calibration, IdenticalCapacitiesReturnThatCapacity) {
  // Every grasp on this heavy small square is limited by friction when pushed DOWN.
  const ObjectShape sq = box(0.02, 0.02, 0.5, 0.8, "heavy_square");
  const Calibration cal = calibrate(sq, kDefault, 200, 1);
  const double expected = 10.0 - 0.8 * 9.81;
  EXPECT_EQ(cal.capacities.size(), 200u);
  EXPECT_NEAR(cal.capacities.front(), expected, 1e-9);
  EXPECT_NEAR(cal.capacities.back(), expected, 1e-9);
  EXPECT_NEAR(cal.force, expected, 1e-9);
}

TEST(Calibration, BarSeparatesEndAndCenterGrasps) {
  const ObjectShape bar = box(0.02, 0.24, 0.5, 0.1, "long_bar");
  const Calibration cal = calibrate(bar, kDefault, 300, 2);
  const std::vector<double>& c = cal.capacities;
  ASSERT_EQ(c.size(), 300u);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
  const std::size_t third = c.size() / 3;
  const double weak = c[third / 2];
  const double strong = c[c.size() - third + third / 2];
  ASSERT_LT(weak, strong);
  EXPECT_GT(cal.force, weak);
  EXPECT_LT(cal.force, strong);
  const auto below = std::count_if(c.begin(), c.end(), [&](double v) { return v < cal.force; });
  EXPECT_GT(below, 0);
  EXPECT_LT(below, static_cast<long>(c.size()));
}

TEST(Calibration, DeterministicForSeed) {
  const ObjectShape stick = testing_support::load("stick");
  EXPECT_EQ(calibrate_force(stick, kDefault, 150, 9), calibrate_force(stick, kDefault, 150, 9));
  EXPECT_NE(calibrate_force(stick, kDefault, 150, 9), calibrate_force(stick, kDefault, 150, 10));
}

TEST(Calibration, Errors) {
  expect_code([] { calibrate(box(0.02, 0.1), kDefault, 99, 0); }, ErrorCode::PRECONDITION_VIOLATION);
  expect_code([] { calibrate(box(0.5, 0.5), kDefault, 100, 0); }, ErrorCode::NO_VALID_GRASPS);
}

TEST(Direction, NamesRoundTrip) {
  for (Direction d : kAllDirections) {
    EXPECT_EQ(parse_direction(to_string(d)), d);
    EXPECT_EQ(kAllDirections[index_of(d)], d);
  }
  EXPECT_FALSE(parse_direction("SIDEWAYS"));
}
