#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace adet::cli {

struct GlobalOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir;
};

struct FixtureOptions {
  int train_images = 200;
  int val_images = 100;
  int height = 128;
  int width = 256;
  int rain_maps = 4;
};

struct SynthOptions {
  std::filesystem::path input;
  std::vector<std::string> splits;  // empty: every split under images/
  std::string fog_preset = "mixed";
  double atmospheric_light = 0.8;
  std::filesystem::path rain_library;
};

struct TrainOptions {
  std::optional<std::string> mode;
  bool source_only = false;
  std::optional<int> phase1_iterations;
  std::optional<int> phase2_iterations;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string split;
  std::optional<double> score_threshold;
};

struct MineOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path source;
  std::filesystem::path target;
  std::string split = "train";
  std::size_t k = 10;
};

struct PlotOptions {
  std::optional<double> lambda0;
  std::optional<double> alpha;
  std::optional<double> beta;
  int samples = 1000;
};

int make_fixture(const GlobalOptions& global, const FixtureOptions& opts);
int synth_fog(const GlobalOptions& global, const SynthOptions& opts);
int synth_aux(const GlobalOptions& global, const SynthOptions& opts);
int train(const GlobalOptions& global, const TrainOptions& opts);
int eval(const GlobalOptions& global, const EvalOptions& opts);
int mine_hard(const GlobalOptions& global, const MineOptions& opts);
int plot_lambda(const GlobalOptions& global, const PlotOptions& opts);

}  // namespace adet::cli
