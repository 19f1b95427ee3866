#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "adet/adversarial.hpp"
#include "adet/detector.hpp"
#include "adet/synthesis.hpp"
#include "adet/training.hpp"

namespace adet {

struct DatasetRef {
  std::string root;
  std::string split = "train";

  friend bool operator==(const DatasetRef&, const DatasetRef&) = default;
};

struct SynthesisConfig {
  std::string fog_preset = "mixed";  // light | medium | heavy | mixed (per-image choice)
  double atmospheric_light = 0.8;
  std::string rain_library;
  RainMixConfig rainmix;
};

// Everything a run needs; serialized as JSON with sorted keys.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetRef source;
  DatasetRef target;
  DatasetRef auxiliary;
  DatasetRef eval{"", "val"};
  DetectorConfig detector;
  TrainConfig train;
  AdversarialConfig adversarial;
  SynthesisConfig synthesis;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
};

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const AdversarialConfig& c);
void from_json(const nlohmann::json& j, AdversarialConfig& c);
void to_json(nlohmann::json& j, const RainMixConfig& c);
void from_json(const nlohmann::json& j, RainMixConfig& c);
void to_json(nlohmann::json& j, const SynthesisConfig& c);
void from_json(const nlohmann::json& j, SynthesisConfig& c);
void to_json(nlohmann::json& j, const DatasetRef& c);
void from_json(const nlohmann::json& j, DatasetRef& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Unknown keys are rejected so typos surface as kConfiguration errors.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

std::string dump_json(const nlohmann::json& j);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace adet
