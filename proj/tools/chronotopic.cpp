#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "chronotopic/io.hpp"
#include "chronotopic/pipeline.hpp"

namespace ct = chronotopic;

int main(int argc, char** argv) {
  CLI::App app{"chronotopic: temporal topic modeling over historical corpora"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string model;
  int k = -1;
  std::string params_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the config seed");
    return cmd;
  };
  add_common(app.add_subcommand("prepare", "tokenize the corpus, build the vocabulary"));
  CLI::App* fit = add_common(
      app.add_subcommand("fit", "fit the configured topic models on the prepared corpus"));
  fit->add_option("--model", model, "fit a single model tag instead of the configured list");
  fit->add_option("--k", k, "fit a single topic count instead of the configured list");
  fit->add_option("--params", params_path,
                  "JSON fragment with cluster parameter overrides (e.g. tune/best.json)")
      ->check(CLI::ExistingFile);
  add_common(app.add_subcommand("evaluate", "score fitted models, write comparison tables"));
  add_common(app.add_subcommand("dynamic", "topics over time for the fitted cluster model"));
  add_common(app.add_subcommand("tune", "search cluster hyperparameters on the prepared corpus"));
  add_common(app.add_subcommand("report", "assemble an HTML index of the run artifacts"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    ct::PipelineConfig cfg = ct::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (app.got_subcommand("prepare")) {
      ct::cmd_prepare(cfg);
    } else if (app.got_subcommand("fit")) {
      nlohmann::json overrides = nlohmann::json::object();
      if (!params_path.empty()) overrides = ct::read_json_file(params_path);
      ct::cmd_fit(cfg, model, k, overrides);
    } else if (app.got_subcommand("evaluate")) {
      ct::cmd_evaluate(cfg);
    } else if (app.got_subcommand("dynamic")) {
      ct::cmd_dynamic(cfg);
    } else if (app.got_subcommand("tune")) {
      ct::cmd_tune(cfg);
    } else if (app.got_subcommand("report")) {
      ct::cmd_report(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ct::exit_code_for(e);
  }
  return 0;
}
