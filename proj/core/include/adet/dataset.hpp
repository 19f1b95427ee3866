#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "adet/detector.hpp"
#include "adet/training.hpp"

namespace adet {

struct ManifestEntry {
  std::string image_file;  // relative to images/<split>/
  std::optional<std::vector<BoxAnnotation>> annotations;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<std::string> categories;
  std::vector<ManifestEntry> entries;  // lexicographic by file name

  std::filesystem::path image_dir() const { return root / "images" / split; }
  std::filesystem::path image_path(std::size_t i) const { return image_dir() / entries.at(i).image_file; }
  bool labeled() const { return !entries.empty() && entries.front().annotations.has_value(); }
};

// Layout: <root>/images/<split>/*.png and, when labeled, <root>/annotations/<split>.json
// holding [{"file": ..., "boxes": [{"category": ..., "box": [x1, y1, x2, y2]}]}].
DatasetManifest ingest_dataset(const std::filesystem::path& root, const std::string& split, bool labeled,
                               const std::vector<std::string>& categories);

nlohmann::json annotations_to_json(const std::vector<ManifestEntry>& entries);
nlohmann::json manifest_to_json(const DatasetManifest& manifest);

// Decodes every image; annotation boxes are clipped to the image bounds.
std::vector<DetectionSample> load_samples(const DatasetManifest& manifest, Domain domain);
std::vector<ImageAnnotations> manifest_annotations(const DatasetManifest& manifest);

// --- synthetic-shapes fixture ---------------------------------------------------------

struct FixtureConfig {
  int train_images = 200;
  int val_images = 100;
  int height = 128;
  int width = 256;
  int rain_maps = 4;
  std::uint64_t seed = 0;
};

std::vector<std::string> fixture_categories();

// Coloured geometric objects on a textured background; fills *boxes.
Image render_fixture_image(Rng& rng, int height, int width, std::vector<BoxAnnotation>* boxes);

// Writes <out>/images/{train,val}, <out>/annotations/{train,val}.json and <out>/rain/*.png.
void make_fixture(const std::filesystem::path& out, const FixtureConfig& cfg);

}  // namespace adet
