#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "adet/checkpoint.hpp"
#include "adet/config.hpp"
#include "adet/dataset.hpp"
#include "adet/error.hpp"
#include "adet/evaluation.hpp"
#include "adet/image_io.hpp"
#include "adet/synthesis.hpp"
#include "adet/training.hpp"

namespace adet::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path output_dir_or(const GlobalOptions& g, const fs::path& fallback) {
  return g.output_dir.empty() ? fallback : g.output_dir;
}

// FNV-1a, so each split draws from its own seed stream regardless of which splits run.
std::uint64_t split_key(const std::string& split) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : split) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::vector<std::string> resolve_splits(const fs::path& root, std::vector<std::string> splits) {
  if (!splits.empty()) return splits;
  const fs::path images = root / "images";
  require(fs::is_directory(images), ErrorKind::kIngestion, "no images/ directory under " + root.string());
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_directory()) splits.push_back(e.path().filename().string());
  std::sort(splits.begin(), splits.end());
  return splits;
}

std::vector<std::string> png_files(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::kIngestion, "image directory not found: " + dir.string());
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  return files;
}

void copy_annotations(const fs::path& in, const fs::path& out, const std::string& split) {
  const fs::path src = in / "annotations" / (split + ".json");
  if (!fs::is_regular_file(src)) return;
  fs::create_directories(out / "annotations");
  fs::copy_file(src, out / "annotations" / (split + ".json"), fs::copy_options::overwrite_existing);
}

std::uint64_t seed_from(const GlobalOptions& g, std::uint64_t fallback) { return g.seed.value_or(fallback); }

// Relative dataset paths in a config file are taken relative to the file itself.
std::string resolve_against(const fs::path& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

void print_ap_table(std::ostream& os, const std::vector<std::string>& categories, const EvalResult& r) {
  std::string header, row;
  char cell[64];
  for (const auto& c : categories) {
    std::snprintf(cell, sizeof(cell), "%10s", c.substr(0, 10).c_str());
    header += cell;
    const auto it = r.per_class_ap.find(c);
    if (it == r.per_class_ap.end())
      std::snprintf(cell, sizeof(cell), "%10s", "-");
    else
      std::snprintf(cell, sizeof(cell), "%10.2f", 100.0 * it->second);
    row += cell;
  }
  std::snprintf(cell, sizeof(cell), "%10s", "mAP");
  header += cell;
  std::snprintf(cell, sizeof(cell), "%10.2f", 100.0 * r.map);
  row += cell;
  os << header << '\n' << row << '\n';
}

}  // namespace

int make_fixture(const GlobalOptions& global, const FixtureOptions& opts) {
  FixtureConfig cfg;
  cfg.train_images = opts.train_images;
  cfg.val_images = opts.val_images;
  cfg.height = opts.height;
  cfg.width = opts.width;
  cfg.rain_maps = opts.rain_maps;
  cfg.seed = seed_from(global, 0);
  const fs::path out = output_dir_or(global, "fixture");
  make_fixture(out, cfg);

  // Ready-to-use run configuration; paths are relative to the fixture root.
  RunConfig run;
  run.seed = cfg.seed;
  run.source = {".", "train"};
  run.target = {"fog", "train"};
  run.eval = {"fog", "val"};
  run.detector.categories = fixture_categories();
  run.train.phase1_iterations = 2000;
  run.train.phase2_iterations = 800;
  run.train.object_classifier_hidden1 = 256;
  run.train.object_classifier_hidden2 = 128;
  run.synthesis.rain_library = "rain";
  save_run_config(out / "run_config.json", run);
  std::cout << "wrote fixture to " << out.string() << '\n';
  return 0;
}

int synth_fog(const GlobalOptions& global, const SynthOptions& opts) {
  const std::uint64_t seed = seed_from(global, 0);
  const fs::path out = output_dir_or(global, opts.input / "fog");
  const bool mixed = opts.fog_preset == "mixed";
  if (!mixed) parse_fog_preset(opts.fog_preset);
  require(opts.atmospheric_light >= 0.0 && opts.atmospheric_light <= 1.0, ErrorKind::kConfiguration,
          "atmospheric light must lie in [0, 1]");
  const FogPreset all[] = {FogPreset::kLight, FogPreset::kMedium, FogPreset::kHeavy};

  for (const auto& split : resolve_splits(opts.input, opts.splits)) {
    const auto files = png_files(opts.input / "images" / split);
    json manifest = json::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
      const std::uint64_t s = derive_seed(seed ^ split_key(split), i);
      Rng rng(s);
      const FogPreset preset = mixed ? all[rng.index(3)] : parse_fog_preset(opts.fog_preset);
      const Image src = read_image(opts.input / "images" / split / files[i]);
      write_image(out / "images" / split / files[i],
                  synthesize_fog(src, fog_density(preset), opts.atmospheric_light));
      manifest.push_back({{"source_file", "images/" + split + "/" + files[i]},
                          {"output_file", "images/" + split + "/" + files[i]},
                          {"seed", s},
                          {"parameters",
                           {{"preset", to_string(preset)},
                            {"density", fog_density(preset)},
                            {"atmospheric_light", opts.atmospheric_light}}}});
    }
    copy_annotations(opts.input, out, split);
    write_json_file(out / "manifests" / (split + ".json"), manifest);
    std::cout << split << ": " << files.size() << " foggy images\n";
  }
  return 0;
}

int synth_aux(const GlobalOptions& global, const SynthOptions& opts) {
  const std::uint64_t seed = seed_from(global, 0);
  const fs::path out = output_dir_or(global, opts.input / "aux");
  const RainLibrary library = RainLibrary::load(opts.rain_library);

  for (const auto& split : resolve_splits(opts.input, opts.splits)) {
    const auto files = png_files(opts.input / "images" / split);
    json manifest = json::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
      const std::uint64_t s = derive_seed(seed ^ split_key(split), i);
      const Image src = read_image(opts.input / "images" / split / files[i]);
      const AuxiliaryResult r = synthesize_auxiliary(src, library, s);
      write_image(out / "images" / split / files[i], r.image);
      manifest.push_back({{"source_file", "images/" + split + "/" + files[i]},
                          {"output_file", "images/" + split + "/" + files[i]},
                          {"seed", s},
                          {"parameters",
                           {{"rain_map", library.name(r.map_index)},
                            {"blend_weight", r.blend_weight},
                            {"chain_weights", r.trace.chain_weights},
                            {"chain_ops", r.trace.chain_ops},
                            {"mix_weight", r.trace.mix_weight}}}});
    }
    write_json_file(out / "manifests" / (split + ".json"), manifest);
    std::cout << split << ": " << files.size() << " auxiliary images\n";
  }
  return 0;
}

int train(const GlobalOptions& global, const TrainOptions& opts) {
  require(!global.config.empty(), ErrorKind::kConfiguration, "train needs --config");
  RunConfig cfg = load_run_config(global.config);
  if (global.seed) cfg.seed = *global.seed;
  if (opts.mode) cfg.train.mode = parse_alignment_mode(*opts.mode);
  if (opts.source_only) cfg.train.source_only = true;
  if (opts.phase1_iterations) cfg.train.phase1_iterations = *opts.phase1_iterations;
  if (opts.phase2_iterations) cfg.train.phase2_iterations = *opts.phase2_iterations;
  cfg.detector.validate();
  cfg.train.validate();
  cfg.adversarial.validate();

  const fs::path base = global.config.parent_path();
  const fs::path out = output_dir_or(global, "run");
  const auto& categories = cfg.detector.categories;

  // Everything is ingested before iteration 0 so dataset problems surface first.
  const auto source_manifest = ingest_dataset(resolve_against(base, cfg.source.root), cfg.source.split, true,
                                              categories);
  TrainingData data;
  data.source = load_samples(source_manifest, Domain::kSource);
  std::optional<DatasetManifest> target_manifest, aux_manifest;
  std::optional<RainLibrary> library;
  if (!cfg.train.source_only) {
    require(!cfg.target.root.empty(), ErrorKind::kConfiguration, "config names no target dataset");
    target_manifest = ingest_dataset(resolve_against(base, cfg.target.root), cfg.target.split, false, categories);
    data.target = load_samples(*target_manifest, Domain::kTarget);
    if (!cfg.auxiliary.root.empty() && !cfg.train.resample_auxiliary) {
      aux_manifest = ingest_dataset(resolve_against(base, cfg.auxiliary.root), cfg.auxiliary.split, false,
                                    categories);
      data.auxiliary = load_samples(*aux_manifest, Domain::kAuxiliary);
    } else {
      require(!cfg.synthesis.rain_library.empty(), ErrorKind::kConfiguration,
              "config names neither an auxiliary dataset nor a rain library");
      library = RainLibrary::load(resolve_against(base, cfg.synthesis.rain_library));
      const std::uint64_t aux_seed = derive_seed(cfg.seed, 20);
      if (cfg.train.resample_auxiliary) {
        data.auxiliary_generator = [&data, &library, &cfg, aux_seed](std::size_t i, int it) {
          const std::uint64_t s = derive_seed(derive_seed(aux_seed, static_cast<std::uint64_t>(it)), i);
          const auto r = synthesize_auxiliary(data.source[i].image, *library, s, cfg.synthesis.rainmix);
          return DetectionSample{data.source[i].image_id, quantize_8bit(r.image), std::nullopt,
                                 Domain::kAuxiliary};
        };
      } else {
        // One auxiliary image per source image, quantized exactly as synth-aux would store it.
        for (std::size_t i = 0; i < data.source.size(); ++i) {
          const auto r = synthesize_auxiliary(data.source[i].image, *library, derive_seed(aux_seed, i),
                                              cfg.synthesis.rainmix);
          data.auxiliary.push_back(
              {data.source[i].image_id, quantize_8bit(r.image), std::nullopt, Domain::kAuxiliary});
        }
      }
    }
  }

  fs::create_directories(out / "manifests");
  save_run_config(out / "config.json", cfg);
  write_json_file(out / "manifests" / "source.json", manifest_to_json(source_manifest));
  if (target_manifest) write_json_file(out / "manifests" / "target.json", manifest_to_json(*target_manifest));
  if (aux_manifest) write_json_file(out / "manifests" / "auxiliary.json", manifest_to_json(*aux_manifest));

  std::ofstream log(out / "train_log.tsv", std::ios::binary);
  require(static_cast<bool>(log), ErrorKind::kIo, "cannot write " + (out / "train_log.tsv").string());
  TrainingResult result = run_training(data, cfg.detector, cfg.train, cfg.adversarial, cfg.seed, &log);
  log.close();
  save_checkpoint(out / "checkpoint", result.model, cfg, result.iterations);
  write_json_file(out / "summary.json", json{{"iterations", result.iterations},
                                              {"skipped_steps", result.skipped_steps},
                                              {"seed", cfg.seed},
                                              {"mode", to_string(cfg.train.mode)},
                                              {"source_only", cfg.train.source_only}});
  std::cout << "trained " << result.iterations << " iterations (" << result.skipped_steps
            << " skipped); checkpoint in " << (out / "checkpoint").string() << '\n';
  return 0;
}

int eval(const GlobalOptions& global, const EvalOptions& opts) {
  const LoadedCheckpoint ckpt = load_checkpoint(opts.checkpoint);
  const RunConfig& cfg = ckpt.config;
  const auto& categories = ckpt.model.detector.config().categories;
  const std::string split = opts.split.empty() ? cfg.eval.split : opts.split;
  const double threshold = opts.score_threshold.value_or(cfg.score_threshold);

  DatasetManifest manifest;
  try {
    manifest = ingest_dataset(opts.data, split, true, categories);
  } catch (const Error& e) {
    if (std::string(e.what()).find("unknown category") != std::string::npos)
      fail(ErrorKind::kConfiguration, std::string("dataset categories do not match the checkpoint: ") + e.what());
    throw;
  }
  const auto samples = load_samples(manifest, Domain::kTarget);
  std::vector<ImageDetections> dets;
  std::vector<ImageAnnotations> truth;
  for (const auto& s : samples) {
    dets.push_back({s.image_id, ckpt.model.detector.detect(s.image, threshold, cfg.nms_iou)});
    truth.push_back({s.image_id, *s.annotations});
  }
  const EvalResult r = evaluate_detections(dets, truth, categories);
  const json report{{"checkpoint", opts.checkpoint.string()},
                    {"data", opts.data.string()},
                    {"split", split},
                    {"categories", categories},
                    {"per_class_ap", r.per_class_ap},
                    {"skipped_classes", r.skipped_classes},
                    {"map", r.map},
                    {"iou_threshold", r.iou_threshold},
                    {"interpolation", r.interpolation},
                    {"detection_count", r.detection_count},
                    {"image_count", samples.size()},
                    {"score_threshold", threshold}};
  const fs::path out = output_dir_or(global, ".");
  write_json_file(out / "eval.json", report);
  print_ap_table(std::cout, categories, r);
  return 0;
}

int mine_hard(const GlobalOptions& global, const MineOptions& opts) {
  const LoadedCheckpoint ckpt = load_checkpoint(opts.checkpoint);
  const auto files = png_files(opts.source / "images" / opts.split);
  std::vector<HardnessPair> pairs;
  for (const auto& f : files) {
    const fs::path target = opts.target / "images" / opts.split / f;
    require(fs::is_regular_file(target), ErrorKind::kIngestion, "entry '" + f + "': no aligned target image");
    pairs.push_back({f, read_image(opts.source / "images" / opts.split / f), read_image(target)});
  }
  if (opts.k > pairs.size())
    std::cerr << "warning: k = " << opts.k << " exceeds the " << pairs.size() << " available pairs\n";
  const auto ranking = mine_hard_examples(pairs, ckpt.model.detector, opts.k);
  json records = json::array();
  for (const auto& r : ranking) records.push_back({{"image_id", r.image_id}, {"ah", r.ah}, {"rank", r.rank}});
  const fs::path out = output_dir_or(global, ".");
  write_json_file(out / "hardness.json", json{{"checkpoint", opts.checkpoint.string()},
                                               {"split", opts.split},
                                               {"k", opts.k},
                                               {"pair_count", pairs.size()},
                                               {"ranking", records}});
  for (const auto& r : ranking) std::cout << r.rank << '\t' << r.image_id << '\t' << r.ah << '\n';
  return 0;
}

int plot_lambda(const GlobalOptions& global, const PlotOptions& opts) {
  AdversarialConfig adv;
  if (!global.config.empty()) adv = load_run_config(global.config).adversarial;
  if (opts.lambda0) adv.lambda0 = *opts.lambda0;
  if (opts.alpha) adv.alpha = *opts.alpha;
  if (opts.beta) adv.beta = *opts.beta;
  adv.validate();
  require(opts.samples >= 1, ErrorKind::kConfiguration, "need at least one sample");

  const fs::path out = output_dir_or(global, ".");
  fs::create_directories(out);
  std::ofstream os(out / "lambda_curve.tsv", std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot write lambda_curve.tsv");
  os << "L_c\tlambda_adv\n";
  char line[96];
  for (int i = 1; i <= opts.samples; ++i) {
    const double lc = 2.0 * i / opts.samples;
    std::snprintf(line, sizeof(line), "%.17g\t%.17g\n", lc, compute_lambda_adv(lc, adv));
    os << line;
  }
  std::cout << "wrote " << opts.samples << " samples to " << (out / "lambda_curve.tsv").string() << '\n';
  return 0;
}

}  // namespace adet::cli
