#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "ntulm/pipeline.hpp"

namespace ntulm::fixtures {

namespace fs = std::filesystem;

/// Fresh, empty scratch directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ntulm_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// A demo suite small enough to run every stage in a few seconds.
inline fs::path write_small_demo(const fs::path& dir, std::uint64_t seed) {
  synthetic::DemoSuiteConfig suite;
  suite.seed = seed;
  suite.corpus_tweets = 200;
  suite.task_train = 120;
  suite.task_eval = 80;
  auto cfg = pipeline::demo_config(seed);
  cfg["kge"]["dim"] = 8;
  cfg["kge"]["epochs"] = 3;
  cfg["encoder"] = {{"hidden_dim", 16}, {"layers", 1}, {"heads", 2}, {"ffn_dim", 32}, {"max_len", 16},
                    {"learning_rate", 1e-3}, {"epochs", 1}, {"batch_size", 32}};
  cfg["probe"] = {{"epochs", 50}, {"learning_rate", 0.1}, {"repeats", 1}};
  return pipeline::write_demo(dir, suite, cfg);
}

/// Relative path -> bytes for every regular file under `dir`.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().lexically_relative(dir).generic_string()] = read_file(e.path());
  return out;
}

}  // namespace ntulm::fixtures
