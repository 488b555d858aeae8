#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ntulm/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kUserError = 1, kInternalError = 2 };

}  // namespace

int main(int argc, char** argv) {
  using namespace ntulm;
  CLI::App app{"ntulm: train and evaluate NTU-enriched tweet encoders"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "Pipeline config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out-dir", out_dir, "Artifact directory")->capture_default_str();

  app.add_subcommand("build-graph", "Build the user/hashtag graph from the corpus");
  app.add_subcommand("train-kge", "Train node and relation embeddings on the graph");
  app.add_subcommand("eval-kge", "Link prediction on held-out edges");
  app.add_subcommand("train-mlm", "Train the NTU-enriched and text-only encoders");
  app.add_subcommand("eval-mlm", "Masked-token cross-entropy in bits");
  auto* embed = app.add_subcommand("embed", "Export post embeddings as JSON Lines");
  std::string variant_name;
  embed->add_option("--variant", variant_name, "ntulm | text | concat")
      ->required()
      ->check(CLI::IsMember({"ntulm", "text", "concat"}));
  app.add_subcommand("probe", "Train probes on the exported embeddings");
  app.add_subcommand("report", "Render probe results as TSV and a summary table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUserError;
  }

  try {
    auto cfg = pipeline::load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    const pipeline::Context ctx{std::move(cfg), {out_dir}, std::cout};
    const auto name = app.get_subcommands().front()->get_name();
    if (name == "build-graph") pipeline::cmd_build_graph(ctx);
    else if (name == "train-kge") pipeline::cmd_train_kge(ctx);
    else if (name == "eval-kge") pipeline::cmd_eval_kge(ctx);
    else if (name == "train-mlm") pipeline::cmd_train_mlm(ctx);
    else if (name == "eval-mlm") pipeline::cmd_eval_mlm(ctx);
    else if (name == "embed") pipeline::cmd_embed(ctx, *parse_variant(variant_name));
    else if (name == "probe") pipeline::cmd_probe(ctx);
    else if (name == "report") pipeline::cmd_report(ctx);
    return kOk;
  } catch (const Error& e) {
    std::cerr << "ntulm: " << e.what() << '\n';
    return pipeline::is_user_error(e.code()) ? kUserError : kInternalError;
  } catch (const std::exception& e) {
    std::cerr << "ntulm: internal error: " << e.what() << '\n';
    return kInternalError;
  }
}
