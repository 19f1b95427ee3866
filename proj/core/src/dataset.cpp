#include "adet/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "adet/config.hpp"
#include "adet/error.hpp"
#include "adet/image_io.hpp"

namespace adet {

using nlohmann::json;

namespace {

std::vector<std::string> list_images(const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path().filename().string());
  std::sort(files.begin(), files.end());
  return files;
}

[[noreturn]] void entry_error(const std::string& file, const std::string& what) {
  fail(ErrorKind::kIngestion, "entry '" + file + "': " + what);
}

}  // namespace

DatasetManifest ingest_dataset(const std::filesystem::path& root, const std::string& split, bool labeled,
                               const std::vector<std::string>& categories) {
  DatasetManifest m{root, split, categories, {}};
  const auto image_dir = m.image_dir();
  require(std::filesystem::is_directory(image_dir), ErrorKind::kIngestion,
          "image directory not found: " + image_dir.string());

  if (!labeled) {
    for (auto& f : list_images(image_dir)) m.entries.push_back({std::move(f), std::nullopt});
    return m;
  }

  const auto ann_path = root / "annotations" / (split + ".json");
  require(std::filesystem::is_regular_file(ann_path), ErrorKind::kIngestion,
          "annotation file not found: " + ann_path.string());
  json doc;
  try {
    std::ifstream in(ann_path, std::ios::binary);
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kIngestion, "malformed JSON in " + ann_path.string() + ": " + e.what());
  }
  require(doc.is_array(), ErrorKind::kIngestion, ann_path.string() + " must hold a JSON list");

  const std::set<std::string> known(categories.begin(), categories.end());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& item = doc[i];
    if (!item.is_object() || !item.contains("file") || !item.at("file").is_string())
      fail(ErrorKind::kIngestion, "annotation #" + std::to_string(i) + " has no \"file\" string");
    const std::string file = item.at("file").get<std::string>();
    if (!seen.insert(file).second) entry_error(file, "listed twice");
    if (!std::filesystem::is_regular_file(image_dir / file)) entry_error(file, "image file does not exist");

    std::vector<BoxAnnotation> boxes;
    if (item.contains("boxes")) {
      if (!item.at("boxes").is_array()) entry_error(file, "\"boxes\" must be a list");
      for (const json& b : item.at("boxes")) {
        if (!b.is_object() || !b.contains("category") || !b.contains("box") || !b.at("category").is_string())
          entry_error(file, "malformed box");
        const std::string category = b.at("category").get<std::string>();
        if (!known.count(category)) entry_error(file, "unknown category '" + category + "'");
        const json& coords = b.at("box");
        if (!coords.is_array() || coords.size() != 4 ||
            !std::all_of(coords.begin(), coords.end(), [](const json& v) { return v.is_number(); }))
          entry_error(file, "box must be [x1, y1, x2, y2]");
        const Box box{coords[0].get<double>(), coords[1].get<double>(), coords[2].get<double>(),
                      coords[3].get<double>()};
        if (!(box.x1 < box.x2) || !(box.y1 < box.y2)) entry_error(file, "inverted or empty box");
        boxes.push_back({category, box});
      }
    }
    m.entries.push_back({file, std::move(boxes)});
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.image_file < b.image_file; });
  return m;
}

json annotations_to_json(const std::vector<ManifestEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) {
    json boxes = json::array();
    if (e.annotations)
      for (const auto& a : *e.annotations)
        boxes.push_back({{"category", a.category}, {"box", {a.box.x1, a.box.y1, a.box.x2, a.box.y2}}});
    out.push_back({{"file", e.image_file}, {"boxes", boxes}});
  }
  return out;
}

json manifest_to_json(const DatasetManifest& m) {
  json files = json::array();
  for (const auto& e : m.entries) files.push_back(e.image_file);
  return json{{"root", m.root.string()},
              {"split", m.split},
              {"labeled", m.labeled()},
              {"categories", m.categories},
              {"entries", files}};
}

std::vector<DetectionSample> load_samples(const DatasetManifest& m, Domain domain) {
  std::vector<DetectionSample> out;
  out.reserve(m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    DetectionSample s{e.image_file, read_image(m.image_path(i)), std::nullopt, domain};
    if (e.annotations) {
      std::vector<BoxAnnotation> clipped;
      for (const auto& a : *e.annotations) {
        const Box b = clip_box(a.box, s.image.width(), s.image.height());
        if (!b.valid()) entry_error(e.image_file, "box lies outside the image");
        clipped.push_back({a.category, b});
      }
      s.annotations = std::move(clipped);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ImageAnnotations> manifest_annotations(const DatasetManifest& m) {
  std::vector<ImageAnnotations> out;
  for (const auto& e : m.entries) out.push_back({e.image_file, e.annotations.value_or(std::vector<BoxAnnotation>{})});
  return out;
}

}  // namespace adet
