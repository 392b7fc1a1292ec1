// efflex: trajectory embedding pipeline.
//
//   efflex ingest    --config cfg.json
//   efflex distances --config cfg.json
//   efflex train     --config cfg.json [--set train.fusion=addition]
//   efflex evaluate  --config cfg.json
//   efflex query     --config cfg.json --id 12 --k 3
//   efflex sweep     --config cfg.json --axis dimension|scale|loss|fusion
//   efflex defaults

#include "efflex/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Trajectory embedding via multi-scale KNN graphs and a lightweight GCN"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  efflex::CommandArgs args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON pipeline config (defaults when omitted)");
    sub->add_option("--set", overrides, "Override a config key, e.g. --set train.epochs=10");
  };

  for (const char* name : {"ingest", "distances", "train", "evaluate"}) add_common(app.add_subcommand(name));
  auto* query = app.add_subcommand("query", "Top-k retrieval for one trajectory, predicted vs ground truth");
  add_common(query);
  query->add_option("--id", args.query_id, "Query trajectory id");
  query->add_option("--k", args.k, "Number of results");
  auto* sweep = app.add_subcommand("sweep", "Ablation sweep writing a CSV of metrics");
  add_common(sweep);
  sweep->add_option("--axis", args.axis, "dimension | scale | loss | fusion")
      ->check(CLI::IsMember({"dimension", "scale", "loss", "fusion"}));
  app.add_subcommand("defaults", "Print the default config document");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : efflex::kExitInput;
  }

  auto* sub = app.get_subcommands().front();
  if (sub->get_name() == "defaults") {
    std::cout << efflex::PipelineConfig::default_document().dump(2) << "\n";
    return efflex::kExitOk;
  }

  efflex::PipelineConfig cfg;
  try {
    cfg = efflex::PipelineConfig::load(config_path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return efflex::kExitInput;
  }
  return efflex::run_command(sub->get_name(), cfg, args, std::cout, std::cerr);
}
