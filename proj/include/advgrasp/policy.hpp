#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "advgrasp/error.hpp"
#include "advgrasp/imaging.hpp"
#include "advgrasp/physics.hpp"
#include "advgrasp/rng.hpp"
#include "advgrasp/tinynet.hpp"

namespace advgrasp {

enum class ExplorationMode { GREEDY, EPSILON, SOFTMAX };

struct Exploration {
  ExplorationMode mode = ExplorationMode::EPSILON;
  double epsilon = 0.1;
  double temperature = 1.0;

  static Exploration greedy() { return {ExplorationMode::GREEDY, 0.0, 1.0}; }
  static Exploration eps(double e) { return {ExplorationMode::EPSILON, e, 1.0}; }
  static Exploration softmax(double t) { return {ExplorationMode::SOFTMAX, 0.0, t}; }
};

struct PolicyConfig {
  std::size_t n_g = 20;
  std::size_t n_a = 18;
  Exploration exploration;
};

inline void validate(const PolicyConfig& c) {
  if (c.n_g < 1) throw Error(ErrorCode::INVALID_CONFIG, "n_g must be at least 1");
  if (c.n_a < 2) throw Error(ErrorCode::INVALID_CONFIG, "n_a must be at least 2");
  if (c.exploration.epsilon < 0.0 || c.exploration.epsilon > 1.0)
    throw Error(ErrorCode::INVALID_CONFIG, "epsilon must lie in [0, 1]");
  if (!(c.exploration.temperature > 0.0)) throw Error(ErrorCode::INVALID_CONFIG, "temperature must be positive");
}

inline void to_json(nlohmann::json& j, const PolicyConfig& c) {
  nlohmann::json ex;
  switch (c.exploration.mode) {
    case ExplorationMode::GREEDY: ex = {{"mode", "greedy"}}; break;
    case ExplorationMode::EPSILON: ex = {{"mode", "epsilon"}, {"epsilon", c.exploration.epsilon}}; break;
    case ExplorationMode::SOFTMAX: ex = {{"mode", "softmax"}, {"temperature", c.exploration.temperature}}; break;
  }
  j = {{"n_g", c.n_g}, {"n_a", c.n_a}, {"exploration", ex}};
}

inline void from_json(const nlohmann::json& j, PolicyConfig& c) {
  c = PolicyConfig{};
  c.n_g = j.value("n_g", c.n_g);
  c.n_a = j.value("n_a", c.n_a);
  if (j.contains("exploration")) {
    const auto& ex = j.at("exploration");
    const std::string mode = ex.value("mode", std::string("epsilon"));
    if (mode == "greedy") {
      c.exploration = Exploration::greedy();
    } else if (mode == "epsilon") {
      c.exploration = Exploration::eps(ex.value("epsilon", 0.1));
    } else if (mode == "softmax") {
      c.exploration = Exploration::softmax(ex.value("temperature", 1.0));
    } else {
      throw Error(ErrorCode::INVALID_CONFIG, "unknown exploration mode '" + mode + "'");
    }
  }
}

// n_g x n_a grid of predicted grasp success, row i belonging to centers[i].
struct ProbabilityMatrix {
  std::size_t n_g = 0;
  std::size_t n_a = 0;
  std::vector<double> values;
  std::vector<PixelPoint> centers;
  std::vector<Patch> patches;

  double at(std::size_t patch, std::size_t angle) const { return values[patch * n_a + angle]; }
};

inline double bin_center_angle(std::size_t bin, std::size_t n_a) {
  return (static_cast<double>(bin) + 0.5) * std::numbers::pi / static_cast<double>(n_a);
}

inline ProbabilityMatrix score_grasps(const net::NetParams& params, const Image& img, const PolicyConfig& cfg,
                                      Rng& rng) {
  validate(cfg);
  if (static_cast<std::size_t>(params.spec.output_width()) != cfg.n_a)
    throw Error(ErrorCode::SHAPE_MISMATCH, "network output width differs from n_a");
  ProbabilityMatrix m;
  m.n_g = cfg.n_g;
  m.n_a = cfg.n_a;
  m.centers = sample_patch_centers(img, cfg.n_g, rng, params.spec.in_width);
  m.values.reserve(cfg.n_g * cfg.n_a);
  for (const PixelPoint& c : m.centers) {
    Patch patch = extract_patch(img, c, params.spec.in_width);
    const auto probs = net::forward(params, patch);
    m.values.insert(m.values.end(), probs.begin(), probs.end());
    m.patches.push_back(std::move(patch));
  }
  return m;
}

struct Selection {
  GraspAction grasp;
  std::size_t patch_idx = 0;
  std::size_t angle_idx = 0;
};

// Row-major argmax; the first maximal cell wins.
inline std::size_t argmax_cell(const ProbabilityMatrix& m) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < m.values.size(); ++i) {
    if (m.values[i] > m.values[best]) best = i;
  }
  return best;
}

inline Selection select_action(const ProbabilityMatrix& m, const Image& img, const Exploration& exploration, Rng& rng) {
  if (m.values.empty() || m.values.size() != m.n_g * m.n_a || m.centers.size() != m.n_g)
    throw Error(ErrorCode::PRECONDITION_VIOLATION, "malformed probability matrix");
  std::size_t cell = 0;
  switch (exploration.mode) {
    case ExplorationMode::GREEDY:
      cell = argmax_cell(m);
      break;
    case ExplorationMode::EPSILON:
      cell = rng.uniform() < exploration.epsilon ? rng.index(m.values.size()) : argmax_cell(m);
      break;
    case ExplorationMode::SOFTMAX: {
      const double top = *std::max_element(m.values.begin(), m.values.end());
      std::vector<double> weights(m.values.size());
      double total = 0.0;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] = std::exp((m.values[i] - top) / exploration.temperature);
        total += weights[i];
      }
      double u = rng.uniform() * total;
      cell = weights.size() - 1;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) {
          cell = i;
          break;
        }
        u -= weights[i];
      }
      break;
    }
  }
  Selection s;
  s.patch_idx = cell / m.n_a;
  s.angle_idx = cell % m.n_a;
  const Vec2 w = pixel_to_world(img, m.centers[s.patch_idx]);
  s.grasp = GraspAction(w.x, w.y, bin_center_angle(s.angle_idx, m.n_a));
  return s;
}

inline Selection select_action(const ProbabilityMatrix& m, const Image& img, const PolicyConfig& cfg, Rng& rng) {
  return select_action(m, img, cfg.exploration, rng);
}

struct RewardBreakdown {
  int robot_term = 0;
  int human_term = 0;
  double alpha = 1.0;
  double total = 0.0;
};

// r = R_robot - alpha * R_human, giving 0, 1 or 1 - alpha.
inline RewardBreakdown compute_reward(bool grasp_success, bool human_acted, bool human_success, double alpha) {
  if (human_success && !human_acted)
    throw Error(ErrorCode::PRECONDITION_VIOLATION, "adversary cannot succeed without acting");
  if (human_acted && !grasp_success)
    throw Error(ErrorCode::PRECONDITION_VIOLATION, "adversary acts only after a successful grasp");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::PRECONDITION_VIOLATION, "alpha must lie in [0, 1]");
  RewardBreakdown r;
  r.alpha = alpha;
  r.robot_term = grasp_success ? 1 : 0;
  r.human_term = human_success ? 1 : 0;
  r.total = r.robot_term - alpha * r.human_term;
  return r;
}

}  // namespace advgrasp
