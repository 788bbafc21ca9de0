#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "advgrasp/adversary.hpp"
#include "advgrasp/config.hpp"
#include "advgrasp/error.hpp"
#include "advgrasp/geometry.hpp"
#include "advgrasp/imaging.hpp"
#include "advgrasp/physics.hpp"
#include "advgrasp/policy.hpp"
#include "advgrasp/rng.hpp"
#include "advgrasp/tinynet.hpp"

namespace advgrasp {

enum class Phase : std::uint8_t { PRETRAIN, WARMUP, ADVERSARIAL, EVAL };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::PRETRAIN: return "PRETRAIN";
    case Phase::WARMUP: return "WARMUP";
    case Phase::ADVERSARIAL: return "ADVERSARIAL";
    case Phase::EVAL: return "EVAL";
  }
  return "?";
}

inline Phase parse_phase(std::string_view s) {
  for (Phase p : {Phase::PRETRAIN, Phase::WARMUP, Phase::ADVERSARIAL, Phase::EVAL}) {
    if (to_string(p) == s) return p;
  }
  throw Error(ErrorCode::PARSE, "unknown phase '" + std::string(s) + "'");
}

inline constexpr int kLogVersion = 1;
inline constexpr std::uint64_t kCalibrationSeed = 0x5eedULL;

struct Scene {
  std::size_t object_idx = 0;
  Pose2 pose;
};

// Objects in play with their disturbance magnitudes.
struct World {
  std::vector<ObjectShape> objects;
  std::vector<double> magnitudes;
  bool randomize_pose = false;
  ImageConfig imaging;

  // Random poses keep the object inside the region where full patches can be cut.
  Scene sample(Rng& rng) const {
    Scene s;
    s.object_idx = objects.size() == 1 ? 0 : rng.index(objects.size());
    if (randomize_pose) {
      const ObjectShape& o = objects[s.object_idx];
      const double reach = 0.5 * (imaging.size_px - imaging.patch_px) * imaging.meters_per_pixel;
      const double slack = std::max(0.0, reach - bounding_radius(o, {0.0, 0.0}));
      const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const double x = rng.uniform(-slack, slack);
      const double y = rng.uniform(-slack, slack);
      s.pose = Pose2(x, y, theta);
    }
    return s;
  }

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < objects.size(); ++i) {
      if (objects[i].name == name) return i;
    }
    throw Error(ErrorCode::PARSE, "unknown object '" + std::string(name) + "'");
  }
};

inline World make_world(const RunConfig& cfg) {
  World w;
  w.objects = cfg.objects;
  w.randomize_pose = cfg.train.randomize_pose;
  w.imaging = cfg.imaging;
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    w.magnitudes.push_back(cfg.train.force_magnitude
                               ? *cfg.train.force_magnitude
                               : calibrate_force(w.objects[i], cfg.gripper,
                                                 static_cast<std::size_t>(cfg.train.calibration_samples),
                                                 kCalibrationSeed + i));
  }
  return w;
}

struct EpisodeRecord {
  std::uint64_t episode_id = 0;
  std::string object;
  Pose2 pose;
  Patch patch;
  std::size_t angle_idx = 0;
  GraspAction grasp;
  bool grasp_success = false;
  std::optional<Direction> adversary_action;
  bool adversary_success = false;
  double magnitude = 0.0;
  RewardBreakdown reward;
  Phase phase = Phase::PRETRAIN;
  bool timed_out = false;
};

inline nlohmann::json to_json(const EpisodeRecord& r) {
  nlohmann::json j = {
      {"type", "episode"},
      {"episode_id", r.episode_id},
      {"object", r.object},
      {"pose", {{"x", r.pose.x}, {"y", r.pose.y}, {"theta", r.pose.theta}}},
      {"patch", {{"center", {r.patch.center.col, r.patch.center.row}}, {"pgm", base64_encode(encode_pgm(r.patch))}}},
      {"angle_idx", r.angle_idx},
      {"grasp", {{"x", r.grasp.x}, {"y", r.grasp.y}, {"theta", r.grasp.theta}}},
      {"grasp_success", r.grasp_success},
      {"adversary_action", r.adversary_action ? nlohmann::json(to_string(*r.adversary_action)) : nlohmann::json()},
      {"adversary_success", r.adversary_success},
      {"magnitude", r.magnitude},
      {"reward",
       {{"robot_term", r.reward.robot_term},
        {"human_term", r.reward.human_term},
        {"alpha", r.reward.alpha},
        {"total", r.reward.total}}},
      {"phase", to_string(r.phase)},
      {"timed_out", r.timed_out}};
  return j;
}

inline EpisodeRecord record_from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  r.episode_id = j.at("episode_id").get<std::uint64_t>();
  r.object = j.at("object").get<std::string>();
  const auto& pose = j.at("pose");
  r.pose = Pose2(pose.at("x").get<double>(), pose.at("y").get<double>(), pose.at("theta").get<double>());
  const auto& patch = j.at("patch");
  Grid g = decode_pgm(base64_decode(patch.at("pgm").get<std::string>()));
  static_cast<Grid&>(r.patch) = std::move(g);
  r.patch.center = {patch.at("center").at(0).get<int>(), patch.at("center").at(1).get<int>()};
  r.angle_idx = j.at("angle_idx").get<std::size_t>();
  const auto& grasp = j.at("grasp");
  r.grasp = GraspAction(grasp.at("x").get<double>(), grasp.at("y").get<double>(), grasp.at("theta").get<double>());
  r.grasp_success = j.at("grasp_success").get<bool>();
  if (!j.at("adversary_action").is_null()) {
    r.adversary_action = parse_direction(j.at("adversary_action").get<std::string>());
    if (!r.adversary_action) throw Error(ErrorCode::PARSE, "unknown direction");
  }
  r.adversary_success = j.at("adversary_success").get<bool>();
  r.magnitude = j.at("magnitude").get<double>();
  const auto& rw = j.at("reward");
  r.reward.robot_term = rw.at("robot_term").get<int>();
  r.reward.human_term = rw.at("human_term").get<int>();
  r.reward.alpha = rw.at("alpha").get<double>();
  r.reward.total = rw.at("total").get<double>();
  r.phase = parse_phase(j.at("phase").get<std::string>());
  r.timed_out = j.at("timed_out").get<bool>();
  return r;
}

// Observable moment between the robot's grasp and the adversary's turn.
struct GraspEvent {
  std::uint64_t episode_id = 0;
  Phase phase = Phase::PRETRAIN;
  const Image& image;
  const GraspState& state;
  const GripperConfig& gripper;
  double magnitude = 0.0;
};

struct BatchProgress {
  int batch = 0;
  std::size_t episodes_done = 0;
  std::size_t snatch_count = 0;
};

struct TrainHooks {
  std::function<void(Phase)> on_phase;
  std::function<void(const GraspEvent&)> on_grasp;
  std::function<void(const EpisodeRecord&)> on_episode;
  std::function<void(const BatchProgress&)> on_batch;
};

struct EpisodeOutput {
  EpisodeRecord record;
  std::optional<AdversaryExample> adversary_example;
};

// One turn of the game: observe, grasp, let the adversary act, score.
inline EpisodeOutput run_episode(const World& world, const Scene& scene, const net::NetParams& params,
                                 Adversary& adversary, const RunConfig& cfg, const Exploration& exploration,
                                 Phase phase, std::uint64_t episode_id, Rng& rng, const TrainHooks* hooks = nullptr) {
  const ObjectShape& object = world.objects[scene.object_idx];
  const double magnitude = world.magnitudes[scene.object_idx];
  const Image img = render_scene(object, scene.pose, cfg.imaging);
  const ProbabilityMatrix m = score_grasps(params, img, cfg.policy, rng);
  const Selection sel = select_action(m, img, exploration, rng);
  const GraspState state = attempt_grasp(object, scene.pose, sel.grasp, cfg.gripper);

  EpisodeOutput out;
  EpisodeRecord& rec = out.record;
  rec.episode_id = episode_id;
  rec.object = object.name;
  rec.pose = scene.pose;
  rec.patch = m.patches[sel.patch_idx];
  rec.angle_idx = sel.angle_idx;
  rec.grasp = sel.grasp;
  rec.grasp_success = state.success;
  rec.magnitude = magnitude;
  rec.phase = phase;

  if (hooks && hooks->on_grasp) hooks->on_grasp(GraspEvent{episode_id, phase, img, state, cfg.gripper, magnitude});

  bool acted = false;
  if (state.success && adversary.kind() != AdversaryKind::NONE) {
    const AdversaryObservation obs = make_observation(img, sel.grasp, cfg.gripper, cfg.imaging.patch_px);
    const AdversaryContext ctx{obs, state, object, cfg.gripper, magnitude, episode_id};
    try {
      rec.adversary_action = adversary.act(ctx, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TIMEOUT) throw;
      rec.timed_out = true;
    }
    acted = rec.adversary_action.has_value() || rec.timed_out;
    if (rec.adversary_action) {
      const DisturbanceOutcome outcome =
          apply_disturbance(state, object, cfg.gripper, {*rec.adversary_action, magnitude});
      rec.adversary_success = !outcome.withstood;
      out.adversary_example = AdversaryExample{obs.patch, *rec.adversary_action, rec.adversary_success};
    }
  }
  rec.reward = compute_reward(state.success, acted, rec.adversary_success, cfg.train.alpha);
  if (hooks && hooks->on_episode) hooks->on_episode(rec);
  return out;
}

// One shuffled BCE/RMSProp pass over a batch, target = reward total.
inline void update_policy(net::NetParams& params, net::OptState& opt, const std::vector<EpisodeRecord>& batch, Rng& rng) {
  std::vector<std::size_t> order(batch.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  for (std::size_t i : order) net::train_example(params, opt, batch[i].patch, batch[i].angle_idx, batch[i].reward.total);
}

struct Checkpoint {
  int batch = 0;
  net::NetParams params;
  std::string path;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<EpisodeRecord> records;
  std::size_t pretrain_updates = 0;
  std::size_t adversarial_updates = 0;
  std::size_t adversary_invocations = 0;
  net::NetParams params;
  World world;
  std::string log_path;
};

inline nlohmann::json log_header(const RunConfig& cfg, const World& world) {
  nlohmann::json forces = nlohmann::json::object();
  for (std::size_t i = 0; i < world.objects.size(); ++i) forces[world.objects[i].name] = world.magnitudes[i];
  const nlohmann::json canonical = canonical_json(cfg);
  return {{"type", "header"},
          {"version", kLogVersion},
          {"config_hash", config_hash(canonical)},
          {"seed", cfg.train.seed},
          {"calibrated_force", forces},
          {"config", canonical}};
}

// Owns the mutable state of one training run: parameters, optimizer, rng, log.
class Trainer {
 public:
  Trainer(RunConfig cfg, Adversary adversary, TrainHooks hooks = {})
      : Trainer(std::move(cfg), std::move(adversary), std::move(hooks), std::nullopt) {}

  Trainer(RunConfig cfg, Adversary adversary, TrainHooks hooks, std::optional<World> world)
      : cfg_(std::move(cfg)),
        world_(world ? std::move(*world) : make_world(cfg_)),
        adversary_(std::move(adversary)),
        hooks_(std::move(hooks)),
        rng_(cfg_.train.seed) {
    validate(cfg_);
    params_ = net::init_params(net::default_spec(static_cast<int>(cfg_.policy.n_a), cfg_.imaging.patch_px),
                               rng_.fork_seed());
    opt_.lr = cfg_.train.learning_rate;
  }

  const RunConfig& config() const { return cfg_; }
  const World& world() const { return world_; }
  const net::NetParams& params() const { return params_; }
  void set_params(net::NetParams p) { params_ = std::move(p); }
  Adversary& adversary() { return adversary_; }
  const std::vector<EpisodeRecord>& records() const { return records_; }
  std::size_t pretrain_updates() const { return pretrain_updates_; }
  std::size_t adversarial_updates() const { return adversarial_updates_; }
  std::size_t adversary_invocations() const { return adversary_invocations_; }

  void set_log(std::ostream* log) { log_ = log; }
  void write_header() {
    if (log_) *log_ << log_header(cfg_, world_).dump() << '\n' << std::flush;
  }

  // Adversary-free phase optimizing only the grasp-success term.
  void pretrain() {
    enter(Phase::PRETRAIN);
    Adversary none = Adversary::none();
    const int total = cfg_.train.pretrain_episodes;
    const int m = cfg_.train.episodes_per_batch;
    for (int start = 0; start < total; start += m) {
      std::vector<EpisodeRecord> batch;
      for (int e = start; e < std::min(total, start + m); ++e) {
        batch.push_back(step(none, Phase::PRETRAIN).record);
      }
      update_policy(params_, opt_, training_set(batch), rng_);
      ++pretrain_updates_;
    }
  }

  // Episodes with the adversary acting but no learning.
  void warmup(int episodes) {
    enter(Phase::WARMUP);
    for (int e = 0; e < episodes; ++e) step(adversary_, Phase::WARMUP);
  }

  std::vector<Checkpoint> adversarial_phase(const std::string& out_dir = {}) {
    enter(Phase::ADVERSARIAL);
    std::vector<Checkpoint> checkpoints;
    std::size_t done = 0;
    std::size_t snatches = 0;
    for (int b = 1; b <= cfg_.train.batches; ++b) {
      std::vector<EpisodeRecord> batch;
      std::vector<AdversaryExample> adversary_batch;
      for (int e = 0; e < cfg_.train.episodes_per_batch; ++e) {
        EpisodeOutput out = step(adversary_, Phase::ADVERSARIAL);
        ++done;
        if (out.record.adversary_success) ++snatches;
        if (out.adversary_example) adversary_batch.push_back(std::move(*out.adversary_example));
        batch.push_back(std::move(out.record));
      }
      update_policy(params_, opt_, training_set(batch), rng_);
      ++adversarial_updates_;
      if (AdversaryNetState* learned = adversary_.learned_state()) {
        rng_.shuffle(adversary_batch.begin(), adversary_batch.end());
        update_learned(*learned, adversary_batch);
      }
      if (b % cfg_.train.checkpoint_every == 0) {
        Checkpoint ck{b, params_, {}};
        if (!out_dir.empty()) {
          ck.path = (std::filesystem::path(out_dir) / ("ckpt_batch" + std::to_string(b) + ".json")).string();
          net::save(params_, ck.path);
        }
        checkpoints.push_back(std::move(ck));
      }
      if (hooks_.on_batch) hooks_.on_batch({b, done, snatches});
    }
    return checkpoints;
  }

  EpisodeOutput step(Adversary& adversary, Phase phase) {
    const Scene scene = world_.sample(rng_);
    const bool counts = adversary.kind() != AdversaryKind::NONE;
    EpisodeOutput out =
        run_episode(world_, scene, params_, adversary, cfg_, cfg_.policy.exploration, phase, next_id_++, rng_, &hooks_);
    if (counts && out.record.grasp_success) ++adversary_invocations_;
    if (log_) *log_ << to_json(out.record).dump() << '\n' << std::flush;
    records_.push_back(out.record);
    return out;
  }

  // Records the next update trains on: the latest batch, or every learning
  // episode recorded so far.
  std::vector<EpisodeRecord> training_set(const std::vector<EpisodeRecord>& batch) {
    for (const EpisodeRecord& r : batch) history_.push_back(r);
    return cfg_.train.update_scope == UpdateScope::ALL ? history_ : batch;
  }

  void write_aborted(const std::string& reason) {
    if (log_) *log_ << nlohmann::json{{"type", "aborted"}, {"reason", reason}}.dump() << '\n' << std::flush;
  }

 private:
  void enter(Phase p) {
    if (hooks_.on_phase) hooks_.on_phase(p);
  }

  RunConfig cfg_;
  World world_;
  Adversary adversary_;
  TrainHooks hooks_;
  Rng rng_;
  net::NetParams params_;
  net::OptState opt_;
  std::ostream* log_ = nullptr;
  std::vector<EpisodeRecord> records_;
  std::vector<EpisodeRecord> history_;
  std::uint64_t next_id_ = 0;
  std::size_t pretrain_updates_ = 0;
  std::size_t adversarial_updates_ = 0;
  std::size_t adversary_invocations_ = 0;
};

inline Adversary make_adversary(const RunConfig& cfg, HumanChannel* channel = nullptr) {
  switch (cfg.train.adversary) {
    case AdversaryKind::NONE: return Adversary::none();
    case AdversaryKind::RANDOM: return Adversary::random();
    case AdversaryKind::ORACLE: return Adversary::oracle();
    case AdversaryKind::LEARNED: {
      AdversaryNetState s = make_learned_adversary(cfg.train.seed ^ 0xadadadadULL, cfg.imaging.patch_px,
                                                   cfg.train.adversary_learning_rate);
      s.epsilon = cfg.train.adversary_epsilon;
      return Adversary::learned(std::move(s));
    }
    case AdversaryKind::HUMAN:
      if (!channel) throw Error(ErrorCode::INVALID_CONFIG, "human adversary needs a session channel");
      return Adversary::human(*channel);
  }
  return Adversary::none();
}

// Self-supervised initialization only.
inline net::NetParams pretrain(const RunConfig& cfg, std::optional<World> world = std::nullopt) {
  Trainer t(cfg, Adversary::none(), {}, std::move(world));
  t.pretrain();
  return t.params();
}

// Full run: pretrain, human warm-up when applicable, then B batches of M episodes.
// Writes run.jsonl and ckpt_batch{k}.json into out_dir when it is non-empty.
inline TrainResult train(const RunConfig& cfg, Adversary adversary, const std::string& out_dir = {},
                         TrainHooks hooks = {}, std::optional<World> world = std::nullopt) {
  Trainer t(cfg, std::move(adversary), std::move(hooks), std::move(world));
  TrainResult result;
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    result.log_path = (std::filesystem::path(out_dir) / "run.jsonl").string();
    log.open(result.log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw Error(ErrorCode::IO, "cannot write " + result.log_path);
    t.set_log(&log);
  }
  t.write_header();
  try {
    t.pretrain();
    if (t.adversary().kind() == AdversaryKind::HUMAN) t.warmup(cfg.train.warmup_episodes);
    result.checkpoints = t.adversarial_phase(out_dir);
  } catch (const Error& e) {
    t.write_aborted(e.what());
    throw;
  }
  result.records = t.records();
  result.pretrain_updates = t.pretrain_updates();
  result.adversarial_updates = t.adversarial_updates();
  result.adversary_invocations = t.adversary_invocations();
  result.params = t.params();
  result.world = t.world();
  return result;
}

// ---- Evaluation ----

struct EvalRow {
  std::size_t episode = 0;
  std::string object;
  bool grasp_success = false;
  std::optional<Direction> direction;
  bool withstood = false;
};

struct EvalReport {
  std::size_t episodes = 0;
  double pre_rate = 0.0;
  double post_rate = 0.0;
  std::vector<EvalRow> rows;
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const EvalRow& row : r.rows) {
    rows.push_back({{"episode", row.episode},
                    {"object", row.object},
                    {"grasp_success", row.grasp_success},
                    {"direction", row.direction ? nlohmann::json(to_string(*row.direction)) : nlohmann::json()},
                    {"withstood", row.withstood}});
  }
  return {{"episodes", r.episodes}, {"pre_rate", r.pre_rate}, {"post_rate", r.post_rate}, {"rows", std::move(rows)}};
}

// One row per object plus an "all" row.
inline std::string to_csv(const EvalReport& r, const std::string& label) {
  std::ostringstream out;
  out << "label,object,episodes,pre_rate,post_rate\n";
  std::vector<std::string> names;
  for (const EvalRow& row : r.rows) {
    if (std::find(names.begin(), names.end(), row.object) == names.end()) names.push_back(row.object);
  }
  if (names.size() > 1) {
    for (const std::string& name : names) {
      std::size_t n = 0, pre = 0, post = 0;
      for (const EvalRow& row : r.rows) {
        if (row.object != name) continue;
        ++n;
        pre += row.grasp_success;
        post += row.withstood;
      }
      out << label << ',' << name << ',' << n << ',' << 100.0 * pre / n << ',' << 100.0 * post / n << '\n';
    }
  }
  out << label << ',' << (names.size() == 1 ? names.front() : std::string("all")) << ',' << r.episodes << ','
      << r.pre_rate << ',' << r.post_rate << '\n';
  return out.str();
}

// Grasp chooser: image in, selection out.
using GraspPolicy = std::function<Selection(const Image&, Rng&)>;

inline GraspPolicy greedy_policy(const net::NetParams& params, const PolicyConfig& cfg) {
  return [&params, cfg](const Image& img, Rng& rng) {
    const ProbabilityMatrix m = score_grasps(params, img, cfg, rng);
    return select_action(m, img, Exploration::greedy(), rng);
  };
}

// Greedy grasps, each followed by a uniformly random disturbance.
inline EvalReport evaluate(const GraspPolicy& policy, const World& world, const RunConfig& cfg, std::size_t episodes,
                           std::uint64_t seed) {
  Rng rng(seed);
  EvalReport report;
  report.episodes = episodes;
  std::size_t pre = 0, post = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const Scene scene = world.sample(rng);
    const ObjectShape& object = world.objects[scene.object_idx];
    const Image img = render_scene(object, scene.pose, cfg.imaging);
    const Selection sel = policy(img, rng);
    const GraspState state = attempt_grasp(object, scene.pose, sel.grasp, cfg.gripper);
    EvalRow row{e, object.name, state.success, std::nullopt, false};
    if (state.success) {
      ++pre;
      row.direction = random_act(rng);
      row.withstood =
          apply_disturbance(state, object, cfg.gripper, {*row.direction, world.magnitudes[scene.object_idx]}).withstood;
      post += row.withstood;
    }
    report.rows.push_back(std::move(row));
  }
  report.pre_rate = episodes ? 100.0 * pre / episodes : 0.0;
  report.post_rate = episodes ? 100.0 * post / episodes : 0.0;
  return report;
}

inline EvalReport evaluate(const net::NetParams& params, const World& world, const RunConfig& cfg, std::size_t episodes,
                           std::uint64_t seed) {
  return evaluate(greedy_policy(params, cfg.policy), world, cfg, episodes, seed);
}

// Post-disturbance success against the oracle adversary, greedy grasps.
inline double validation_rate(const net::NetParams& params, const World& world, const RunConfig& cfg,
                              std::size_t episodes, std::uint64_t seed) {
  Rng rng(seed);
  const GraspPolicy policy = greedy_policy(params, cfg.policy);
  std::size_t held = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const Scene scene = world.sample(rng);
    const ObjectShape& object = world.objects[scene.object_idx];
    const Image img = render_scene(object, scene.pose, cfg.imaging);
    const Selection sel = policy(img, rng);
    const GraspState state = attempt_grasp(object, scene.pose, sel.grasp, cfg.gripper);
    if (!state.success) continue;
    const AdversaryObservation obs{Patch{}, sel.grasp};
    const double magnitude = world.magnitudes[scene.object_idx];
    const AdversaryContext ctx{obs, state, object, cfg.gripper, magnitude, e};
    held += apply_disturbance(state, object, cfg.gripper, {oracle_act(ctx), magnitude}).withstood;
  }
  return episodes ? 100.0 * held / episodes : 0.0;
}

struct EarlyStopResult {
  std::size_t index = 0;
  std::vector<double> rates;
};

inline constexpr std::uint64_t kValidationSeedSalt = 0x7a11da7eULL;

inline std::size_t select_earliest_within(const std::vector<double>& rates, double margin) {
  const double best = *std::max_element(rates.begin(), rates.end());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] >= best - margin) return i;
  }
  return rates.size() - 1;
}

// Earliest checkpoint within `early_stop_margin` points of the best validation rate.
inline EarlyStopResult early_stop_select(const std::vector<Checkpoint>& checkpoints, const World& world,
                                         const RunConfig& cfg) {
  if (checkpoints.empty()) throw Error(ErrorCode::PRECONDITION_VIOLATION, "no checkpoints to choose from");
  EarlyStopResult r;
  const std::uint64_t seed = cfg.train.seed ^ kValidationSeedSalt;
  for (const Checkpoint& ck : checkpoints) {
    r.rates.push_back(
        validation_rate(ck.params, world, cfg, static_cast<std::size_t>(cfg.train.validation_episodes), seed));
  }
  r.index = select_earliest_within(r.rates, cfg.train.early_stop_margin);
  return r;
}

}  // namespace advgrasp
