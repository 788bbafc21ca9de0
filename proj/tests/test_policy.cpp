#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "advgrasp/policy.hpp"
#include "expect.hpp"
#include "support.hpp"

using namespace advgrasp;
using testing_support::expect_code;

namespace {

const Image kImg(64, 64, 0.005);

ProbabilityMatrix matrix(std::size_t n_g, std::size_t n_a, std::vector<double> values) {
  ProbabilityMatrix m;
  m.n_g = n_g;
  m.n_a = n_a;
  m.values = std::move(values);
  for (std::size_t i = 0; i < n_g; ++i) m.centers.push_back({20 + static_cast<int>(i), 40 - static_cast<int>(i)});
  return m;
}

ProbabilityMatrix random_matrix(std::size_t n_g, std::size_t n_a, Rng& rng) {
  std::vector<double> v(n_g * n_a);
  for (double& x : v) x = rng.uniform();
  return matrix(n_g, n_a, std::move(v));
}

}  // namespace

TEST(ScoreGrasps, ZeroWeightsGiveOneHalf) {
  const auto params = net::zero_params(net::default_spec(18));
  const Image img = render_scene(testing_support::load("stick"), Pose2{}, {});
  Rng rng(1);
  const ProbabilityMatrix m = score_grasps(params, img, PolicyConfig{}, rng);
  EXPECT_EQ(m.n_g, 20u);
  EXPECT_EQ(m.values.size(), 20u * 18u);
  EXPECT_EQ(m.patches.size(), 20u);
  for (double v : m.values) EXPECT_EQ(v, 0.5);
}

TEST(ScoreGrasps, SinglePatchShapeAndDeterminism) {
  const auto params = net::init_params(net::default_spec(18), 3);
  const Image img = render_scene(testing_support::load("bottle"), Pose2(0, 0, 0.5), {});
  PolicyConfig cfg;
  cfg.n_g = 1;
  Rng rng(2);
  const ProbabilityMatrix one = score_grasps(params, img, cfg, rng);
  EXPECT_EQ(one.n_g, 1u);
  EXPECT_EQ(one.n_a, 18u);
  EXPECT_EQ(one.values.size(), 18u);
  Rng a(9), b(9);
  EXPECT_EQ(score_grasps(params, img, PolicyConfig{}, a).values, score_grasps(params, img, PolicyConfig{}, b).values);
}

TEST(ScoreGrasps, OutputWidthMustMatch) {
  const auto params = net::zero_params(net::default_spec(12));
  const Image img = render_scene(testing_support::load("stick"), Pose2{}, {});
  Rng rng(1);
  expect_code([&] { score_grasps(params, img, PolicyConfig{}, rng); }, ErrorCode::SHAPE_MISMATCH);
}

TEST(SelectAction, SingleCellAlwaysChosen) {
  const ProbabilityMatrix m = matrix(1, 1, {0.3});
  Rng rng(4);
  for (const Exploration& e : {Exploration::greedy(), Exploration::eps(1.0), Exploration::softmax(0.5)}) {
    for (int i = 0; i < 20; ++i) {
      const Selection s = select_action(m, kImg, e, rng);
      EXPECT_EQ(s.patch_idx, 0u);
      EXPECT_EQ(s.angle_idx, 0u);
    }
  }
}

TEST(SelectAction, GreedyPicksArgmaxAndMapsToGrasp) {
  std::vector<double> v(20 * 18, 0.1);
  v[3 * 18 + 7] = 0.9;
  const ProbabilityMatrix m = matrix(20, 18, v);
  Rng rng(5);
  const Selection s = select_action(m, kImg, Exploration::greedy(), rng);
  EXPECT_EQ(s.patch_idx, 3u);
  EXPECT_EQ(s.angle_idx, 7u);
  const Vec2 w = pixel_to_world(kImg, m.centers[3]);
  EXPECT_DOUBLE_EQ(s.grasp.x, w.x);
  EXPECT_DOUBLE_EQ(s.grasp.y, w.y);
  EXPECT_NEAR(s.grasp.theta, 7.5 * std::numbers::pi / 18, 1e-12);
}

TEST(SelectAction, TiesBreakToLowestPatchThenAngle) {
  std::vector<double> v(5 * 4, 0.2);
  v[2 * 4 + 3] = v[2 * 4 + 1] = v[4 * 4 + 0] = 0.8;
  Rng rng(6);
  const Selection s = select_action(matrix(5, 4, v), kImg, Exploration::greedy(), rng);
  EXPECT_EQ(s.patch_idx, 2u);
  EXPECT_EQ(s.angle_idx, 1u);
}

TEST(SelectAction, EpsilonZeroIsGreedy) {
  Rng gen(7);
  for (int i = 0; i < 100; ++i) {
    const ProbabilityMatrix m = random_matrix(20, 18, gen);
    Rng a(i), b(i);
    const Selection g = select_action(m, kImg, Exploration::greedy(), a);
    const Selection e = select_action(m, kImg, Exploration::eps(0.0), b);
    EXPECT_EQ(g.patch_idx, e.patch_idx);
    EXPECT_EQ(g.angle_idx, e.angle_idx);
  }
}

TEST(SelectAction, GreedyInvariantUnderMonotoneTransform) {
  Rng gen(8);
  for (int i = 0; i < 100; ++i) {
    ProbabilityMatrix m = random_matrix(7, 9, gen);
    Rng a(1), b(1);
    const Selection before = select_action(m, kImg, Exploration::greedy(), a);
    for (double& v : m.values) v = std::pow(v, 3) + 2 * v - 5;
    const Selection after = select_action(m, kImg, Exploration::greedy(), b);
    EXPECT_EQ(before.patch_idx, after.patch_idx);
    EXPECT_EQ(before.angle_idx, after.angle_idx);
  }
}

TEST(SelectAction, EpsilonOneIsUniform) {
  const ProbabilityMatrix m = matrix(2, 2, {0.9, 0.1, 0.1, 0.1});
  Rng rng(9);
  std::array<int, 4> counts{};
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const Selection s = select_action(m, kImg, Exploration::eps(1.0), rng);
    ++counts[s.patch_idx * 2 + s.angle_idx];
  }
  for (int c : counts) EXPECT_NEAR(c / double(n), 0.25, 0.01);
}

TEST(SelectAction, SoftmaxFollowsBoltzmannWeights) {
  const double t = 0.5;
  const ProbabilityMatrix m = matrix(1, 3, {0.2, 0.6, 0.9});
  double z = 0;
  for (double v : m.values) z += std::exp(v / t);
  Rng rng(10);
  std::array<int, 3> counts{};
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[select_action(m, kImg, Exploration::softmax(t), rng).angle_idx];
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(counts[k] / double(n), std::exp(m.values[k] / t) / z, 0.01);
}

TEST(SelectAction, MalformedMatrix) {
  Rng rng(1);
  ProbabilityMatrix m = matrix(2, 3, {0.1, 0.2, 0.3, 0.4, 0.5});
  expect_code([&] { select_action(m, kImg, Exploration::greedy(), rng); }, ErrorCode::PRECONDITION_VIOLATION);
}

TEST(Reward, AllFlagCombinations) {
  for (double alpha : {0.0, 0.3, 0.5, 1.0}) {
    EXPECT_EQ(compute_reward(false, false, false, alpha).total, 0.0);
    EXPECT_EQ(compute_reward(true, false, false, alpha).total, 1.0);
    EXPECT_EQ(compute_reward(true, true, false, alpha).total, 1.0);
    const RewardBreakdown snatched = compute_reward(true, true, true, alpha);
    EXPECT_DOUBLE_EQ(snatched.total, 1.0 - alpha);
    EXPECT_EQ(snatched.robot_term, 1);
    EXPECT_EQ(snatched.human_term, 1);
    EXPECT_EQ(snatched.alpha, alpha);
  }
  EXPECT_DOUBLE_EQ(compute_reward(true, true, true, 0.3).total, 0.7);
}

TEST(Reward, ImpossibleCombinations) {
  expect_code([] { compute_reward(false, true, false, 0.5); }, ErrorCode::PRECONDITION_VIOLATION);
  expect_code([] { compute_reward(false, true, true, 0.5); }, ErrorCode::PRECONDITION_VIOLATION);
  expect_code([] { compute_reward(true, false, true, 0.5); }, ErrorCode::PRECONDITION_VIOLATION);
  expect_code([] { compute_reward(true, true, true, 1.5); }, ErrorCode::PRECONDITION_VIOLATION);
  expect_code([] { compute_reward(true, true, true, -0.1); }, ErrorCode::PRECONDITION_VIOLATION);
}

TEST(PolicyConfig, JsonRoundTripAndValidation) {
  PolicyConfig c;
  c.n_g = 7;
  c.exploration = Exploration::softmax(0.25);
  const PolicyConfig back = nlohmann::json(c).get<PolicyConfig>();
  EXPECT_EQ(back.n_g, 7u);
  EXPECT_EQ(back.n_a, 18u);
  EXPECT_EQ(back.exploration.mode, ExplorationMode::SOFTMAX);
  EXPECT_EQ(back.exploration.temperature, 0.25);
  const PolicyConfig defaults = nlohmann::json::object().get<PolicyConfig>();
  EXPECT_EQ(defaults.exploration.mode, ExplorationMode::EPSILON);
  EXPECT_EQ(defaults.exploration.epsilon, 0.1);
  expect_code([] { nlohmann::json{{"exploration", {{"mode", "boltzmann"}}}}.get<PolicyConfig>(); },
              ErrorCode::INVALID_CONFIG);
  PolicyConfig bad;
  bad.n_g = 0;
  expect_code([&] { validate(bad); }, ErrorCode::INVALID_CONFIG);
}
