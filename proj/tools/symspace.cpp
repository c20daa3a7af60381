#include <CLI11.hpp>

#include "symspace/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"symspace: scenario runner for symmetric-space and affine-connection numerics"};
  app.require_subcommand(1);

  std::string scenario_path, out_path;
  long seed = -1;
  int steps = -1;
  CLI::App* run = app.add_subcommand("run", "run a JSON scenario and emit a report");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--out", out_path, "report output path (overrides the scenario's 'out')");
  run->add_option("--seed", seed, "sampling seed override");
  run->add_option("--steps", steps, "RK4 steps-per-unit override");

  CLI::App* schema = app.add_subcommand("schema", "print the scenario JSON schema");

  CLI11_PARSE(app, argc, argv);

  if (schema->parsed()) {
    std::fputs(symspace::schema_text().c_str(), stdout);
    return 0;
  }

  symspace::RunOverrides ov;
  ov.out = out_path;
  ov.seed = seed;
  ov.steps = steps;
  return symspace::run_scenario_file(scenario_path, ov);
}
