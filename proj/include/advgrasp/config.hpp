#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/sha.h>

#include "json.hpp"

#include "advgrasp/adversary.hpp"
#include "advgrasp/error.hpp"
#include "advgrasp/geometry.hpp"
#include "advgrasp/imaging.hpp"
#include "advgrasp/physics.hpp"
#include "advgrasp/policy.hpp"

namespace advgrasp {

// Records used by each per-batch policy update.
enum class UpdateScope : std::uint8_t { BATCH, ALL };

inline std::string_view to_string(UpdateScope s) { return s == UpdateScope::ALL ? "all" : "batch"; }

inline UpdateScope parse_update_scope(std::string_view s) {
  if (s == "batch") return UpdateScope::BATCH;
  if (s == "all") return UpdateScope::ALL;
  throw Error(ErrorCode::INVALID_CONFIG, "update_scope must be 'batch' or 'all'");
}

struct TrainConfig {
  int batches = 5;
  int episodes_per_batch = 9;
  double alpha = 1.0;
  int pretrain_episodes = 200;
  AdversaryKind adversary = AdversaryKind::NONE;
  std::vector<std::string> object_files;
  bool randomize_pose = false;
  std::optional<double> force_magnitude;  // empty means AUTO (calibrated per object)
  std::uint64_t seed = 0;
  int checkpoint_every = 1;
  double learning_rate = 1e-3;
  double adversary_learning_rate = 1e-3;
  double adversary_epsilon = 0.1;
  int calibration_samples = 500;
  int warmup_episodes = 10;
  double human_timeout_s = 0.0;  // 0 blocks indefinitely
  int eval_episodes = 50;
  int validation_episodes = 20;
  double early_stop_margin = 5.0;  // percentage points
  UpdateScope update_scope = UpdateScope::BATCH;
};

// The single run-config document: gripper, imaging, policy and train sections.
struct RunConfig {
  GripperConfig gripper;
  ImageConfig imaging;
  PolicyConfig policy;
  TrainConfig train;
  std::vector<ObjectShape> objects;
};

inline void validate(const TrainConfig& t) {
  if (t.batches < 1 || t.episodes_per_batch < 1)
    throw Error(ErrorCode::INVALID_CONFIG, "batches and episodes_per_batch must be at least 1");
  if (!(t.alpha >= 0.0 && t.alpha <= 1.0)) throw Error(ErrorCode::INVALID_CONFIG, "alpha must lie in [0, 1]");
  if (t.pretrain_episodes < 0) throw Error(ErrorCode::INVALID_CONFIG, "pretrain_episodes must be non-negative");
  if (t.checkpoint_every < 1) throw Error(ErrorCode::INVALID_CONFIG, "checkpoint_every must be at least 1");
  if (t.force_magnitude && !(*t.force_magnitude > 0.0))
    throw Error(ErrorCode::INVALID_CONFIG, "force_magnitude must be positive or AUTO");
  if (!(t.learning_rate > 0.0) || !(t.adversary_learning_rate > 0.0))
    throw Error(ErrorCode::INVALID_CONFIG, "learning rates must be positive");
  if (t.calibration_samples < 100) throw Error(ErrorCode::INVALID_CONFIG, "calibration_samples must be at least 100");
  if (t.eval_episodes < 1 || t.validation_episodes < 1 || t.warmup_episodes < 0)
    throw Error(ErrorCode::INVALID_CONFIG, "episode counts out of range");
}

inline void validate(const RunConfig& c) {
  validate(c.gripper);
  validate(c.imaging);
  validate(c.policy);
  validate(c.train);
  if (c.objects.empty()) throw Error(ErrorCode::INVALID_CONFIG, "at least one object is required");
  for (const ObjectShape& o : c.objects) validate(o);
}

inline nlohmann::json train_section_json(const TrainConfig& t) {
  nlohmann::json j = {{"batches", t.batches},
                      {"episodes_per_batch", t.episodes_per_batch},
                      {"alpha", t.alpha},
                      {"pretrain_episodes", t.pretrain_episodes},
                      {"adversary", to_string(t.adversary)},
                      {"randomize_pose", t.randomize_pose},
                      {"seed", t.seed},
                      {"checkpoint_every", t.checkpoint_every},
                      {"learning_rate", t.learning_rate},
                      {"adversary_learning_rate", t.adversary_learning_rate},
                      {"adversary_epsilon", t.adversary_epsilon},
                      {"calibration_samples", t.calibration_samples},
                      {"warmup_episodes", t.warmup_episodes},
                      {"human_timeout_s", t.human_timeout_s},
                      {"eval_episodes", t.eval_episodes},
                      {"validation_episodes", t.validation_episodes},
                      {"early_stop_margin", t.early_stop_margin},
                      {"update_scope", to_string(t.update_scope)}};
  if (t.force_magnitude) {
    j["force_magnitude"] = *t.force_magnitude;
  } else {
    j["force_magnitude"] = "AUTO";
  }
  return j;
}

// Self-contained form (objects inline) used for log headers and the config hash.
inline nlohmann::json canonical_json(const RunConfig& c) {
  nlohmann::json train = train_section_json(c.train);
  train["objects"] = c.objects;
  return {{"gripper", c.gripper}, {"imaging", c.imaging}, {"policy", c.policy}, {"train", std::move(train)}};
}

inline std::string sha256_hex(const std::string& text, std::size_t hex_chars = 16) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out.substr(0, hex_chars);
}

inline std::string config_hash(const nlohmann::json& canonical) { return sha256_hex(canonical.dump()); }
inline std::string config_hash(const RunConfig& c) { return config_hash(canonical_json(c)); }

// Object entries may be file paths (resolved against base_dir) or inline object documents.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  try {
    if (j.contains("gripper")) c.gripper = j.at("gripper").get<GripperConfig>();
    if (j.contains("imaging")) c.imaging = j.at("imaging").get<ImageConfig>();
    if (j.contains("policy")) c.policy = j.at("policy").get<PolicyConfig>();
    const nlohmann::json train = j.value("train", nlohmann::json::object());
    TrainConfig& t = c.train;
    t.batches = train.value("batches", t.batches);
    t.episodes_per_batch = train.value("episodes_per_batch", t.episodes_per_batch);
    t.alpha = train.value("alpha", t.alpha);
    t.pretrain_episodes = train.value("pretrain_episodes", t.pretrain_episodes);
    t.adversary = parse_adversary_kind(train.value("adversary", std::string("none")));
    t.randomize_pose = train.value("randomize_pose", t.randomize_pose);
    t.seed = train.value("seed", t.seed);
    t.checkpoint_every = train.value("checkpoint_every", t.checkpoint_every);
    t.learning_rate = train.value("learning_rate", t.learning_rate);
    t.adversary_learning_rate = train.value("adversary_learning_rate", t.adversary_learning_rate);
    t.adversary_epsilon = train.value("adversary_epsilon", t.adversary_epsilon);
    t.calibration_samples = train.value("calibration_samples", t.calibration_samples);
    t.warmup_episodes = train.value("warmup_episodes", t.warmup_episodes);
    t.human_timeout_s = train.value("human_timeout_s", t.human_timeout_s);
    t.eval_episodes = train.value("eval_episodes", t.eval_episodes);
    t.validation_episodes = train.value("validation_episodes", t.validation_episodes);
    t.early_stop_margin = train.value("early_stop_margin", t.early_stop_margin);
    t.update_scope = parse_update_scope(train.value("update_scope", std::string("batch")));
    if (train.contains("force_magnitude")) {
      const auto& f = train.at("force_magnitude");
      if (f.is_string()) {
        if (f.get<std::string>() != "AUTO") throw Error(ErrorCode::INVALID_CONFIG, "force_magnitude must be AUTO or a number");
      } else {
        t.force_magnitude = f.get<double>();
      }
    }
    for (const auto& o : train.value("objects", nlohmann::json::array())) {
      if (o.is_string()) {
        std::filesystem::path p = o.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        t.object_files.push_back(p.string());
        c.objects.push_back(load_object(p.string()));
      } else {
        ObjectShape shape = o.get<ObjectShape>();
        validate(shape);
        c.objects.push_back(std::move(shape));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::PARSE, std::string("run config: ") + e.what());
  }
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::PARSE, path + ": " + e.what());
  }
  return parse_run_config(j, std::filesystem::path(path).parent_path());
}

}  // namespace advgrasp
