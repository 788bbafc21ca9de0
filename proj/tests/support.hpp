#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "advgrasp/config.hpp"
#include "advgrasp/error.hpp"
#include "advgrasp/geometry.hpp"

namespace testing_support {

inline std::filesystem::path data_dir() { return ADVGRASP_DATA_DIR; }

inline std::string object_path(const std::string& name) { return (data_dir() / "objects" / (name + ".json")).string(); }

inline advgrasp::ObjectShape load(const std::string& name) { return advgrasp::load_object(object_path(name)); }

inline std::vector<std::string> object_names() { return {"bottle", "t_shape", "half_nut", "round_nut", "stick"}; }

inline advgrasp::Polygon rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

inline advgrasp::ObjectShape box(double w, double h, double mu = 0.5, double mass = 0.1, const std::string& name = "box") {
  return {name, mu, mass, {rect(-w / 2, -h / 2, w / 2, h / 2)}};
}

// Small, fast run on the named objects.
inline advgrasp::RunConfig small_config(std::vector<std::string> objects = {"stick"},
                                        advgrasp::AdversaryKind adversary = advgrasp::AdversaryKind::ORACLE,
                                        std::uint64_t seed = 0) {
  advgrasp::RunConfig c;
  for (const std::string& name : objects) c.objects.push_back(load(name));
  c.train.adversary = adversary;
  c.train.seed = seed;
  c.train.pretrain_episodes = 18;
  c.train.batches = 3;
  c.train.episodes_per_batch = 4;
  c.train.calibration_samples = 100;
  c.train.validation_episodes = 5;
  return c;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto p = std::filesystem::temp_directory_path() / ("advgrasp_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace testing_support
