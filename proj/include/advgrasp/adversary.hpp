#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advgrasp/error.hpp"
#include "advgrasp/imaging.hpp"
#include "advgrasp/physics.hpp"
#include "advgrasp/rng.hpp"
#include "advgrasp/tinynet.hpp"

namespace advgrasp {

enum class AdversaryKind : std::uint8_t { NONE, RANDOM, LEARNED, ORACLE, HUMAN };

inline std::string_view to_string(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::NONE: return "none";
    case AdversaryKind::RANDOM: return "random";
    case AdversaryKind::LEARNED: return "learned";
    case AdversaryKind::ORACLE: return "oracle";
    case AdversaryKind::HUMAN: return "human";
  }
  return "?";
}

inline AdversaryKind parse_adversary_kind(std::string_view s) {
  for (AdversaryKind k : {AdversaryKind::NONE, AdversaryKind::RANDOM, AdversaryKind::LEARNED, AdversaryKind::ORACLE,
                          AdversaryKind::HUMAN}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::INVALID_CONFIG, "unknown adversary '" + std::string(s) + "'");
}

inline constexpr double kGripperBarIntensity = 0.5;

// Grasp-centered window with the open gripper bar drawn over empty pixels.
struct AdversaryObservation {
  Patch patch;
  GraspAction grasp;
};

inline AdversaryObservation make_observation(const Image& img, const GraspAction& grasp, const GripperConfig& g,
                                             int patch_px = 32) {
  const PixelPoint center = world_to_pixel(img, grasp.center());
  AdversaryObservation obs{extract_patch(img, center, patch_px), grasp};
  const Vec2 half = (0.5 * g.jaw_open_width) * grasp.axis();
  const Vec2 a = world_to_pixel_coords(img, grasp.center() - half);
  const Vec2 b = world_to_pixel_coords(img, grasp.center() + half);
  const int steps = static_cast<int>(std::ceil(4.0 * norm(b - a))) + 1;
  const int offset = patch_px / 2;
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = a + (static_cast<double>(i) / steps) * (b - a);
    const int col = static_cast<int>(std::lround(p.x)) - (center.col - offset);
    const int row = static_cast<int>(std::lround(p.y)) - (center.row - offset);
    if (!obs.patch.in_bounds(col, row)) continue;
    double& px = obs.patch.at(col, row);
    if (px < kGripperBarIntensity) px = kGripperBarIntensity;
  }
  return obs;
}

// Everything an adversary may consult when choosing a disturbance.
struct AdversaryContext {
  const AdversaryObservation& obs;
  const GraspState& state;
  const ObjectShape& object;  // object frame; physics needs only mass and friction
  const GripperConfig& gripper;
  double magnitude = 1.0;
  std::uint64_t episode_id = 0;
};

// Blocking link to a live human. Implementations throw CHANNEL_CLOSED or TIMEOUT.
class HumanChannel {
 public:
  virtual ~HumanChannel() = default;
  virtual Direction request_action(const AdversaryContext& ctx) = 0;
};

inline Direction random_act(Rng& rng) { return kAllDirections[rng.index(kAllDirections.size())]; }

// Lowest-index succeeding direction, otherwise the one with the least capacity margin.
inline Direction oracle_act(const AdversaryContext& ctx) {
  Direction weakest = Direction::POS_X;
  double weakest_cap = std::numeric_limits<double>::infinity();
  for (Direction d : kAllDirections) {
    const DisturbanceOutcome out = apply_disturbance(ctx.state, ctx.object, ctx.gripper, {d, ctx.magnitude});
    if (!out.withstood) return d;
    const double cap = resist_capacity(ctx.state, ctx.object, ctx.gripper, d);
    if (cap < weakest_cap) {
      weakest_cap = cap;
      weakest = d;
    }
  }
  return weakest;
}

struct AdversaryExample {
  Patch patch;
  Direction direction = Direction::POS_X;
  bool success = false;
};

struct AdversaryNetState {
  net::NetParams params;
  net::OptState opt;
  std::vector<AdversaryExample> replay;
  double epsilon = 0.1;
};

inline AdversaryNetState make_learned_adversary(std::uint64_t seed, int patch_px = 32, double lr = 1e-3) {
  AdversaryNetState s;
  s.params = net::init_params(net::default_spec(static_cast<int>(kAllDirections.size()), patch_px), seed);
  s.opt.lr = lr;
  return s;
}

inline Direction learned_act(const AdversaryNetState& s, const AdversaryObservation& obs, Rng& rng) {
  if (s.params.spec.output_width() != static_cast<int>(kAllDirections.size()))
    throw Error(ErrorCode::SHAPE_MISMATCH, "adversary network must have 6 outputs");
  if (rng.uniform() < s.epsilon) return random_act(rng);
  const auto probs = net::forward(s.params, obs.patch);
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return kAllDirections[best];
}

// One BCE/RMSProp pass in the given order; target 1 when the snatch succeeded.
inline void update_learned(AdversaryNetState& s, const std::vector<AdversaryExample>& batch) {
  for (const AdversaryExample& ex : batch) {
    net::train_example(s.params, s.opt, ex.patch, index_of(ex.direction), ex.success ? 1.0 : 0.0);
    s.replay.push_back(ex);
  }
}

class Adversary {
 public:
  static Adversary none() { return Adversary(AdversaryKind::NONE); }
  static Adversary random() { return Adversary(AdversaryKind::RANDOM); }
  static Adversary oracle() { return Adversary(AdversaryKind::ORACLE); }
  static Adversary learned(AdversaryNetState state) {
    Adversary a(AdversaryKind::LEARNED);
    a.learned_ = std::make_shared<AdversaryNetState>(std::move(state));
    return a;
  }
  static Adversary human(HumanChannel& channel) {
    Adversary a(AdversaryKind::HUMAN);
    a.channel_ = &channel;
    return a;
  }

  AdversaryKind kind() const { return kind_; }

  // Called only after a successful grasp.
  std::optional<Direction> act(const AdversaryContext& ctx, Rng& rng) {
    if (!ctx.state.success) throw Error(ErrorCode::PRECONDITION_VIOLATION, "adversary invoked without a grasp");
    switch (kind_) {
      case AdversaryKind::NONE: return std::nullopt;
      case AdversaryKind::RANDOM: return random_act(rng);
      case AdversaryKind::ORACLE: return oracle_act(ctx);
      case AdversaryKind::LEARNED: return learned_act(*learned_, ctx.obs, rng);
      case AdversaryKind::HUMAN: return channel_->request_action(ctx);
    }
    return std::nullopt;
  }

  AdversaryNetState* learned_state() { return learned_.get(); }
  const AdversaryNetState* learned_state() const { return learned_.get(); }

 private:
  explicit Adversary(AdversaryKind kind) : kind_(kind) {}

  AdversaryKind kind_;
  std::shared_ptr<AdversaryNetState> learned_;
  HumanChannel* channel_ = nullptr;
};

}  // namespace advgrasp
