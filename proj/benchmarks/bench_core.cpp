#include <benchmark/benchmark.h>

#include "adet/evaluation.hpp"
#include "adet/synthesis.hpp"
#include "adet/training.hpp"

namespace adet {
namespace {

Image noise(Rng& rng, int h, int w) {
  Image img(h, w);
  for (double& v : img.mutable_pixels().values()) v = rng.uniform();
  return img;
}

DetectorConfig fixture_detector() {
  DetectorConfig cfg;
  cfg.categories = {"circle", "square", "triangle"};
  return cfg;
}

TrainConfig fixture_train() {
  TrainConfig cfg;
  cfg.object_classifier_hidden1 = 256;
  cfg.object_classifier_hidden2 = 128;
  return cfg;
}

void BM_Backbone(benchmark::State& state) {
  const int h = static_cast<int>(state.range(0)), w = 2 * h;
  const Detector det = Detector::create(fixture_detector(), 1);
  Rng rng(2);
  const Image img = noise(rng, h, w);
  for (auto _ : state) benchmark::DoNotOptimize(det.extract_features(img));
  state.SetItemsProcessed(state.iterations() * h * w);
}
BENCHMARK(BM_Backbone)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Detect(benchmark::State& state) {
  const Detector det = Detector::create(fixture_detector(), 1);
  Rng rng(3);
  const Image img = noise(rng, 128, 256);
  for (auto _ : state) benchmark::DoNotOptimize(det.detect(img, 0.05, 0.5));
}
BENCHMARK(BM_Detect)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg = fixture_train();
  cfg.source_only = state.range(0) == 0;
  Model model = Model::create(fixture_detector(), cfg, 4);
  Rng rng(5);
  TripletBatch batch;
  batch.source = {"s", noise(rng, 128, 256), std::vector<BoxAnnotation>{{"circle", {20, 30, 70, 80}}}, Domain::kSource};
  batch.target = {"t", noise(rng, 128, 256), std::nullopt, Domain::kTarget};
  batch.auxiliary = {"a", noise(rng, 128, 256), std::nullopt, Domain::kAuxiliary};
  StepState step;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(batch, model, cfg, AdversarialConfig{}, step, rng));
  state.SetLabel(cfg.source_only ? "source-only" : "full method");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_AveragePrecision(benchmark::State& state) {
  Rng rng(6);
  std::map<std::string, std::vector<Box>> gt;
  std::vector<ScoredBox> dets;
  for (int img = 0; img < 100; ++img) {
    const std::string id = std::to_string(img);
    for (int g = 0; g < 5; ++g) {
      const double x = rng.uniform(0, 200), y = rng.uniform(0, 100);
      gt[id].push_back({x, y, x + 30, y + 30});
    }
    for (int d = 0; d < state.range(0) / 100; ++d) {
      const double x = rng.uniform(0, 200), y = rng.uniform(0, 100);
      dets.push_back({id, {x, y, x + 30, y + 30}, rng.uniform()});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(dets, gt));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(10000);

void BM_Nms(benchmark::State& state) {
  Rng rng(7);
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (int i = 0; i < state.range(0); ++i) {
    const double x = rng.uniform(0, 200), y = rng.uniform(0, 100);
    boxes.push_back({x, y, x + rng.uniform(10, 60), y + rng.uniform(10, 60)});
    scores.push_back(rng.uniform());
  }
  for (auto _ : state) benchmark::DoNotOptimize(nms(boxes, scores, 0.7));
}
BENCHMARK(BM_Nms)->Arg(600)->Arg(2000);

void BM_SynthesizeAuxiliary(benchmark::State& state) {
  Rng rng(8);
  std::vector<RainMap> maps;
  maps.push_back(generate_rain_streaks(128, 256, rng));
  const RainLibrary lib(std::move(maps), {"streaks"});
  const Image img = noise(rng, 128, 256);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synthesize_auxiliary(img, lib, seed++));
}
BENCHMARK(BM_SynthesizeAuxiliary)->Unit(benchmark::kMillisecond);

void BM_Fog(benchmark::State& state) {
  Rng rng(9);
  const Image img = noise(rng, 128, 256);
  for (auto _ : state) benchmark::DoNotOptimize(synthesize_fog(img, 1.0, 0.8));
}
BENCHMARK(BM_Fog);

}  // namespace
}  // namespace adet

BENCHMARK_MAIN();
