#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ntulm/pipeline.hpp"

// Writes a synthetic demo corpus, two task datasets and a matching config.
int main(int argc, char** argv) {
  CLI::App app{"ntulm-synth: generate a synthetic demo suite"};
  std::string out_dir;
  std::uint64_t seed = 1;
  ntulm::synthetic::DemoSuiteConfig suite;
  app.add_option("--out-dir", out_dir, "Directory for the datasets and config.json")->required();
  app.add_option("--seed", seed, "Generator and pipeline seed")->capture_default_str();
  app.add_option("--corpus-tweets", suite.corpus_tweets, "Pretraining posts")->capture_default_str();
  app.add_option("--task-train", suite.task_train, "Training posts per task")->capture_default_str();
  app.add_option("--task-eval", suite.task_eval, "Evaluation posts for the community task")->capture_default_str();
  app.add_option("--text-signal", suite.text_signal, "Probability that a post's cue word names its community")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  suite.seed = seed;
  try {
    const auto config = ntulm::pipeline::write_demo(out_dir, suite, ntulm::pipeline::demo_config(seed));
    std::cout << "wrote " << config.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "ntulm-synth: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
