#pragma once

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "advgrasp/config.hpp"
#include "advgrasp/error.hpp"
#include "advgrasp/physics.hpp"
#include "advgrasp/session.hpp"
#include "advgrasp/tinynet.hpp"
#include "advgrasp/trainer.hpp"

namespace advgrasp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

namespace detail {

inline SessionServer* g_active_server = nullptr;

inline void stop_server(int) {
  if (g_active_server) g_active_server->request_stop();
}

inline std::optional<double> parse_force(const std::string& text) {
  if (text.empty() || text == "AUTO") return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size() || !(v > 0.0)) throw Error(ErrorCode::INVALID_CONFIG, "--force must be AUTO or a positive number");
  return v;
}

}  // namespace detail

// Flags shared by commands that read a run config; unset flags leave the config alone.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> adversary;
  std::optional<int> batches;
  std::optional<int> episodes_per_batch;
  std::optional<int> pretrain_episodes;
  std::optional<double> alpha;
  std::optional<std::string> force;
  std::optional<double> learning_rate;
  std::optional<std::string> update_scope;
  std::optional<double> timeout;

  void apply(RunConfig& c) const {
    if (seed) c.train.seed = *seed;
    if (adversary) c.train.adversary = parse_adversary_kind(*adversary);
    if (batches) c.train.batches = *batches;
    if (episodes_per_batch) c.train.episodes_per_batch = *episodes_per_batch;
    if (pretrain_episodes) c.train.pretrain_episodes = *pretrain_episodes;
    if (alpha) c.train.alpha = *alpha;
    if (force) c.train.force_magnitude = detail::parse_force(*force);
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (update_scope) c.train.update_scope = parse_update_scope(*update_scope);
    if (timeout) c.train.human_timeout_s = *timeout;
    validate(c);
  }
};

inline void write_json(const std::string& path, const nlohmann::json& j) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  write_text_file(path, j.dump(2) + "\n");
}

inline int cmd_train(const std::string& config_path, const std::string& out_dir, const Overrides& ov, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  ov.apply(cfg);
  if (cfg.train.adversary == AdversaryKind::HUMAN)
    throw Error(ErrorCode::INVALID_CONFIG, "the human adversary runs through 'serve'");
  const TrainResult result = train(cfg, make_adversary(cfg), out_dir);
  const EarlyStopResult chosen = early_stop_select(result.checkpoints, result.world, cfg);
  const Checkpoint& ck = result.checkpoints[chosen.index];
  write_json((std::filesystem::path(out_dir) / "selection.json").string(),
             {{"selected_batch", ck.batch}, {"checkpoint", ck.path}, {"validation_post_rates", chosen.rates}});
  out << "log " << result.log_path << "\n";
  out << "episodes " << result.records.size() << " (adversarial " << cfg.train.batches * cfg.train.episodes_per_batch
      << "), updates " << result.adversarial_updates << ", checkpoints " << result.checkpoints.size() << "\n";
  out << "selected " << ck.path << " (validation post " << chosen.rates[chosen.index] << "%)\n";
  return kExitOk;
}

inline int cmd_pretrain(const std::string& config_path, const std::string& model_out, const Overrides& ov,
                        std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  ov.apply(cfg);
  const net::NetParams params = pretrain(cfg);
  const std::filesystem::path p(model_out);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  net::save(params, model_out);
  out << "pretrained " << cfg.train.pretrain_episodes << " episodes -> " << model_out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model;
  std::string object;
  std::optional<std::string> config;
  std::size_t episodes = 50;
  std::uint64_t seed = 0;
  std::string out = "report.json";
  std::optional<std::string> csv;
  std::string force = "AUTO";
  std::string label = "policy";
  bool random_pose = false;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  RunConfig cfg;
  if (a.config) cfg = load_run_config(*a.config);
  cfg.objects = {load_object(a.object)};
  cfg.train.object_files = {a.object};
  cfg.train.force_magnitude = detail::parse_force(a.force);
  cfg.train.randomize_pose = a.random_pose;
  validate(cfg);
  const net::NetParams params =
      net::load(a.model, net::default_spec(static_cast<int>(cfg.policy.n_a), cfg.imaging.patch_px));
  const World world = make_world(cfg);
  const EvalReport report = evaluate(params, world, cfg, a.episodes, a.seed);
  nlohmann::json j = to_json(report);
  j["label"] = a.label;
  j["object"] = cfg.objects.front().name;
  j["magnitude"] = world.magnitudes.front();
  j["seed"] = a.seed;
  write_json(a.out, j);
  const std::string csv_path = a.csv ? *a.csv : std::filesystem::path(a.out).replace_extension(".csv").string();
  write_text_file(csv_path, to_csv(report, a.label));
  out << a.label << " " << cfg.objects.front().name << ": pre " << report.pre_rate << "% post " << report.post_rate
      << "% over " << report.episodes << " episodes\n";
  return kExitOk;
}

inline int cmd_calibrate(const std::string& object_path, std::size_t samples, std::uint64_t seed,
                         const std::optional<std::string>& config_path, const std::optional<std::string>& out_path,
                         std::ostream& out) {
  GripperConfig g;
  if (config_path) g = load_run_config(*config_path).gripper;
  const ObjectShape object = load_object(object_path);
  const Calibration c = calibrate(object, g, samples, kCalibrationSeed + seed);
  const nlohmann::json j = {{"object", object.name},
                            {"force", c.force},
                            {"samples", samples},
                            {"seed", seed},
                            {"attempts", c.attempts},
                            {"min_capacity", c.capacities.front()},
                            {"max_capacity", c.capacities.back()}};
  if (out_path) write_json(*out_path, j);
  out << j.dump() << "\n";
  return kExitOk;
}

inline int cmd_replay(const std::string& log, const std::optional<std::string>& out_path, std::ostream& out) {
  const ReplayReport r = replay(log);
  if (out_path) write_json(*out_path, to_json(r));
  out << "episodes " << r.episodes << ", mismatches " << r.mismatches << (r.aborted ? ", aborted" : "") << "\n";
  for (const ReplayMismatch& m : r.details)
    out << "  line " << m.line << " episode " << m.episode_id << ": " << m.field << "\n";
  return r.mismatches == 0 ? kExitOk : kExitRuntime;
}

inline int cmd_serve(const std::string& config_path, const std::string& bind, const std::string& out_dir,
                     Overrides ov, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  ov.adversary = "human";
  ov.apply(cfg);
  SessionServer server(cfg, bind);
  out << "listening on port " << server.port() << "\n" << std::flush;
  detail::g_active_server = &server;
  auto previous = std::signal(SIGINT, detail::stop_server);
  try {
    const SessionSummary s = server.run(out_dir);
    std::signal(SIGINT, previous);
    detail::g_active_server = nullptr;
    out << to_json(s).dump() << "\n";
  } catch (...) {
    std::signal(SIGINT, previous);
    detail::g_active_server = nullptr;
    throw;
  }
  return kExitOk;
}

// Parses argv and runs one command. Exit 0 on success, 1 on usage errors, 2 on runtime errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Adversarial grasp training at desk scale", "advgrasp"};
  app.require_subcommand(1);

  Overrides ov;
  auto add_overrides = [&ov](CLI::App* sub, bool with_pretrain = true) {
    sub->add_option("--seed", ov.seed, "Random seed (default 0, or the config's seed)");
    sub->add_option("--batches", ov.batches, "Number of batches B");
    sub->add_option("--episodes-per-batch", ov.episodes_per_batch, "Episodes per batch M");
    if (with_pretrain)
      sub->add_option("--pretrain-episodes", ov.pretrain_episodes, "Self-supervised episodes before training");
    sub->add_option("--alpha", ov.alpha, "Weight of the adversary term in the reward");
    sub->add_option("--force", ov.force, "Disturbance magnitude in newtons, or AUTO");
    sub->add_option("--lr", ov.learning_rate, "Policy learning rate");
    sub->add_option("--update-scope", ov.update_scope, "Records per update: batch or all")
        ->check(CLI::IsMember({"batch", "all"}));
  };

  std::string config, out_dir = "out", bind = "127.0.0.1:8765", model_out = "pretrained.json";
  CLI::App* train_cmd = app.add_subcommand("train", "Pretrain, then train against an adversary");
  train_cmd->add_option("--config", config, "Run config JSON")->required();
  train_cmd->add_option("--adversary", ov.adversary, "none, random, learned or oracle")
      ->check(CLI::IsMember({"none", "random", "learned", "oracle"}));
  train_cmd->add_option("--out", out_dir, "Output directory for run.jsonl and checkpoints");
  add_overrides(train_cmd);

  CLI::App* serve_cmd = app.add_subcommand("serve", "Host a live human-adversary session");
  serve_cmd->add_option("--config", config, "Run config JSON")->required();
  serve_cmd->add_option("--bind", bind, "host:port to listen on (port 0 picks a free port)");
  serve_cmd->add_option("--out", out_dir, "Output directory for run.jsonl and checkpoints");
  serve_cmd->add_option("--timeout", ov.timeout, "Seconds to wait for each human action (0 waits forever)");
  add_overrides(serve_cmd);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Greedy grasps followed by a random disturbance");
  eval_cmd->add_option("--model", ev.model, "Checkpoint JSON")->required();
  eval_cmd->add_option("--object", ev.object, "Object JSON")->required();
  eval_cmd->add_option("--config", ev.config, "Run config supplying gripper, imaging and policy sections");
  eval_cmd->add_option("--episodes", ev.episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", ev.seed, "Random seed");
  eval_cmd->add_option("--out", ev.out, "Report JSON path (a CSV is written next to it)");
  eval_cmd->add_option("--csv", ev.csv, "CSV path");
  eval_cmd->add_option("--force", ev.force, "Disturbance magnitude in newtons, or AUTO");
  eval_cmd->add_option("--label", ev.label, "Row label for the CSV");
  eval_cmd->add_flag("--random-pose", ev.random_pose, "Random object pose per episode");

  std::string object;
  std::size_t samples = 500;
  std::uint64_t seed = 0;
  std::optional<std::string> calib_config, report_out;
  CLI::App* calibrate_cmd = app.add_subcommand("calibrate", "Pick the disturbance magnitude for an object");
  calibrate_cmd->add_option("--object", object, "Object JSON")->required();
  calibrate_cmd->add_option("--samples", samples, "Successful grasps to sample (at least 100)");
  calibrate_cmd->add_option("--seed", seed, "Random seed");
  calibrate_cmd->add_option("--config", calib_config, "Run config supplying the gripper section");
  calibrate_cmd->add_option("--out", report_out, "Write the result as JSON");

  std::string log;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Recompute a JSONL log and report mismatches");
  replay_cmd->add_option("--log", log, "run.jsonl")->required();
  replay_cmd->add_option("--out", report_out, "Write the report as JSON");

  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "Self-supervised pretraining only");
  pretrain_cmd->add_option("--config", config, "Run config JSON")->required();
  pretrain_cmd->add_option("--episodes", ov.pretrain_episodes, "Pretraining episodes (default: the config's, 200)")
      ->check(CLI::NonNegativeNumber);
  pretrain_cmd->add_option("--out", model_out, "Output checkpoint JSON");
  add_overrides(pretrain_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "usage error: " << e.what() << "\n\n";
    const auto parsed = app.get_subcommands();
    err << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config, out_dir, ov, out);
    if (serve_cmd->parsed()) return cmd_serve(config, bind, out_dir, ov, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    if (calibrate_cmd->parsed()) return cmd_calibrate(object, samples, seed, calib_config, report_out, out);
    if (replay_cmd->parsed()) return cmd_replay(log, report_out, out);
    if (pretrain_cmd->parsed()) return cmd_pretrain(config, model_out, ov, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace advgrasp::cli
