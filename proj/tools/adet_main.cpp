#include <iostream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "adet/error.hpp"
#include "commands.hpp"

namespace {

// Optional-valued flags: CLI11 fills a plain value and we keep it only if given.
template <typename T>
CLI::Option* add_optional(CLI::App* app, const std::string& name, std::optional<T>& target,
                          const std::string& help) {
  return app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help)->type_name(
      CLI::detail::type_name<T>());
}

void report_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  using namespace adet::cli;
  CLI::App app{"Domain-adaptive object detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  add_optional(&app, "--seed", global.seed, "Global random seed (overrides the config)");
  app.add_option("--config", global.config, "Run configuration (JSON)");
  app.add_option("--output-dir", global.output_dir, "Where results are written");

  FixtureOptions fixture;
  auto* fix_cmd = app.add_subcommand("make-fixture", "Generate the synthetic-shapes dataset");
  fix_cmd->add_option("--train", fixture.train_images, "Training images");
  fix_cmd->add_option("--val", fixture.val_images, "Validation images");
  fix_cmd->add_option("--height", fixture.height, "Image height");
  fix_cmd->add_option("--width", fixture.width, "Image width");
  fix_cmd->add_option("--rain-maps", fixture.rain_maps, "Rain streak maps in the bundled library");

  SynthOptions fog;
  auto* fog_cmd = app.add_subcommand("synth-fog", "Render a foggy copy of a dataset");
  fog_cmd->add_option("--input", fog.input, "Dataset root")->required();
  fog_cmd->add_option("--split", fog.splits, "Split(s) to convert (default: all)");
  fog_cmd->add_option("--preset", fog.fog_preset, "light | medium | heavy | mixed");
  fog_cmd->add_option("--light", fog.atmospheric_light, "Atmospheric light in [0, 1]");

  SynthOptions aux;
  auto* aux_cmd = app.add_subcommand("synth-aux", "Render the rain-blended auxiliary domain");
  aux_cmd->add_option("--input", aux.input, "Dataset root")->required();
  aux_cmd->add_option("--split", aux.splits, "Split(s) to convert (default: all)");
  aux_cmd->add_option("--rain-library", aux.rain_library, "Directory of rain-streak PNGs")->required();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a detector");
  add_optional(train_cmd, "--mode", train.mode, "aligned | unaligned");
  train_cmd->add_flag("--source-only", train.source_only, "Disable every adaptation term");
  add_optional(train_cmd, "--phase1", train.phase1_iterations, "Iterations at the initial rate");
  add_optional(train_cmd, "--phase2", train.phase2_iterations, "Iterations at the reduced rate");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Compute per-class AP and mAP");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", ev.data, "Labeled dataset root")->required();
  eval_cmd->add_option("--split", ev.split, "Split (default: the checkpoint's eval split)");
  add_optional(eval_cmd, "--score-threshold", ev.score_threshold, "Minimum detection score");

  MineOptions mine;
  auto* mine_cmd = app.add_subcommand("mine-hard", "Rank aligned pairs by approximated hardness");
  mine_cmd->add_option("--checkpoint", mine.checkpoint, "Checkpoint directory")->required();
  mine_cmd->add_option("--source", mine.source, "Source dataset root")->required();
  mine_cmd->add_option("--target", mine.target, "Target dataset root")->required();
  mine_cmd->add_option("--split", mine.split, "Split");
  mine_cmd->add_option("-k,--top", mine.k, "Number of hardest examples");

  PlotOptions plot;
  auto* plot_cmd = app.add_subcommand("plot-lambda", "Tabulate the adaptive reversal weight curve");
  add_optional(plot_cmd, "--lambda0", plot.lambda0, "Base reversal weight");
  add_optional(plot_cmd, "--alpha", plot.alpha, "Hardness threshold");
  add_optional(plot_cmd, "--beta", plot.beta, "Overflow cap");
  plot_cmd->add_option("--samples", plot.samples, "Sample count over (0, 2]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fix_cmd) return make_fixture(global, fixture);
    if (*fog_cmd) return synth_fog(global, fog);
    if (*aux_cmd) return synth_aux(global, aux);
    if (*train_cmd) return adet::cli::train(global, train);
    if (*eval_cmd) return adet::cli::eval(global, ev);
    if (*mine_cmd) return mine_hard(global, mine);
    if (*plot_cmd) return plot_lambda(global, plot);
  } catch (const adet::Error& e) {
    report_error(adet::to_string(e.kind()), e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 3;
  }
  return 1;
}
