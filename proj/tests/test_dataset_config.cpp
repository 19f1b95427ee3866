#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "adet/checkpoint.hpp"
#include "adet/config.hpp"
#include "adet/dataset.hpp"
#include "adet/error.hpp"
#include "adet/image_io.hpp"
#include "step_fixture.hpp"
#include "test_util.hpp"

namespace adet {
namespace {

using nlohmann::json;
using testing::TempDir;

const std::vector<std::string> kCats{"car", "person"};

void touch_images(const std::filesystem::path& root, const std::string& split, const std::vector<std::string>& files) {
  std::filesystem::create_directories(root / "images" / split);
  for (const auto& f : files) testing::write_file(root / "images" / split / f, "");
}

void write_annotations(const std::filesystem::path& root, const std::string& split, const std::string& text) {
  std::filesystem::create_directories(root / "annotations");
  testing::write_file(root / "annotations" / (split + ".json"), text);
}

void expect_ingestion_error(const std::filesystem::path& root, const std::string& needle) {
  try {
    ingest_dataset(root, "train", true, kCats);
    FAIL() << "expected an ingestion error mentioning " << needle;
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIngestion);
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Ingestion, EmptyBoxListIsValid) {
  TempDir dir;
  touch_images(dir.path(), "train", {"a.png"});
  write_annotations(dir.path(), "train", R"([{"file": "a.png", "boxes": []}])");
  const DatasetManifest m = ingest_dataset(dir.path(), "train", true, kCats);
  ASSERT_EQ(m.entries.size(), 1u);
  ASSERT_TRUE(m.entries[0].annotations.has_value());
  EXPECT_TRUE(m.entries[0].annotations->empty());
}

TEST(Ingestion, ParsesBoxes) {
  TempDir dir;
  touch_images(dir.path(), "train", {"a.png"});
  write_annotations(dir.path(), "train",
                    R"([{"file": "a.png", "boxes": [{"category": "person", "box": [1, 2, 30.5, 40]}]}])");
  const DatasetManifest m = ingest_dataset(dir.path(), "train", true, kCats);
  EXPECT_EQ(m.entries[0].annotations->at(0), (BoxAnnotation{"person", {1, 2, 30.5, 40}}));
  EXPECT_EQ(annotations_to_json(m.entries)[0]["boxes"][0]["box"], json::parse("[1.0, 2.0, 30.5, 40.0]"));
}

TEST(Ingestion, RejectsBadEntriesByName) {
  TempDir dir;
  touch_images(dir.path(), "train", {"a.png", "b.png"});
  write_annotations(dir.path(), "train",
                    R"([{"file": "a.png", "boxes": []}, {"file": "b.png", "boxes": [{"category": "car", "box": [10, 5, 4, 9]}]}])");
  expect_ingestion_error(dir.path(), "'b.png'");
  write_annotations(dir.path(), "train", R"([{"file": "b.png", "boxes": [{"category": "tram", "box": [0, 0, 4, 9]}]}])");
  expect_ingestion_error(dir.path(), "unknown category 'tram'");
  write_annotations(dir.path(), "train", R"([{"file": "missing.png", "boxes": []}])");
  expect_ingestion_error(dir.path(), "'missing.png'");
  write_annotations(dir.path(), "train", R"([{"file": "a.png"}, {"file": "a.png"}])");
  expect_ingestion_error(dir.path(), "listed twice");
  write_annotations(dir.path(), "train", R"([{"file": "a.png", "boxes": [{"category": "car", "box": [0, 0, "x", 9]}]}])");
  expect_ingestion_error(dir.path(), "'a.png'");
  write_annotations(dir.path(), "train", R"([{"file": "a.png", "boxes": [)");
  expect_ingestion_error(dir.path(), "malformed JSON");
  std::filesystem::remove(dir.path() / "annotations" / "train.json");
  expect_ingestion_error(dir.path(), "annotation file not found");
}

TEST(Ingestion, FullSizeManifestKeepsEveryEntryInOrder) {
  TempDir dir;
  std::vector<std::string> files;
  json ann = json::array();
  for (int i = 2974; i >= 0; --i) {
    char name[32];
    std::snprintf(name, sizeof(name), "city_%06d.png", i);
    files.push_back(name);
    ann.push_back({{"file", name}, {"boxes", json::array()}});
  }
  touch_images(dir.path(), "train", files);
  write_annotations(dir.path(), "train", ann.dump());
  const DatasetManifest m = ingest_dataset(dir.path(), "train", true, kCats);
  ASSERT_EQ(m.entries.size(), 2975u);
  for (std::size_t i = 1; i < m.entries.size(); ++i) EXPECT_LT(m.entries[i - 1].image_file, m.entries[i].image_file);
  EXPECT_EQ(m.entries.front().image_file, "city_000000.png");
}

TEST(Ingestion, UnlabeledTargetListsImagesLexicographically) {
  TempDir dir;
  touch_images(dir.path(), "train", {"b.png", "a.png", "c.png", "notes.txt"});
  const DatasetManifest m = ingest_dataset(dir.path(), "train", false, kCats);
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].image_file, "a.png");
  EXPECT_EQ(m.entries[2].image_file, "c.png");
  EXPECT_FALSE(m.labeled());
  EXPECT_FALSE(m.entries[0].annotations.has_value());
  const json j = manifest_to_json(m);
  EXPECT_EQ(j["entries"], json::parse(R"(["a.png", "b.png", "c.png"])"));
  EXPECT_THROW(ingest_dataset(dir.path(), "val", false, kCats), Error);
}

TEST(Ingestion, LoadSamplesClipsToImage) {
  TempDir dir;
  std::filesystem::create_directories(dir.path() / "images" / "train");
  write_image(dir.path() / "images" / "train" / "a.png", Image(20, 30));
  write_annotations(dir.path(), "train",
                    R"([{"file": "a.png", "boxes": [{"category": "car", "box": [-3, 2, 35, 10]}]}])");
  const auto samples = load_samples(ingest_dataset(dir.path(), "train", true, kCats), Domain::kSource);
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].image.height(), 20);
  EXPECT_EQ(samples[0].annotations->at(0).box, (Box{0, 2, 30, 10}));
}

TEST(Config, RoundTripIsIdentity) {
  RunConfig c;
  c.seed = 42;
  c.source = {"data/src", "train"};
  c.target = {"data/fog", "train"};
  c.detector.categories = {"x", "y"};
  c.train.w = 0.25;
  c.train.mode = AlignmentMode::kUnaligned;
  c.adversarial.beta = 12.0;
  c.synthesis.rainmix.chains = 2;
  const json j = c;
  const RunConfig back = j.get<RunConfig>();
  EXPECT_EQ(json(back), j);
  EXPECT_EQ(dump_json(back), dump_json(j));

  TempDir dir;
  save_run_config(dir.path() / "c.json", c);
  EXPECT_EQ(json(load_run_config(dir.path() / "c.json")), j);
}

TEST(Config, RejectsUnknownKeys) {
  TempDir dir;
  json j = RunConfig{};
  j["train"]["learning_rat"] = 0.1;
  write_json_file(dir.path() / "c.json", j);
  try {
    load_run_config(dir.path() / "c.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfiguration);
    EXPECT_NE(std::string(e.what()).find("learning_rat"), std::string::npos);
  }
}

TEST(Config, PartialFileKeepsDefaults) {
  TempDir dir;
  testing::write_file(dir.path() / "c.json", R"({"seed": 3, "train": {"w": 0.5}})");
  const RunConfig c = load_run_config(dir.path() / "c.json");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.train.w, 0.5);
  EXPECT_EQ(c.adversarial.alpha, 0.63);
  EXPECT_EQ(c.train.phase1_iterations, 50000);
}

TEST(Config, JsonKeysAreSorted) {
  const std::string text = dump_json(json{{"zeta", 1}, {"alpha", 2}});
  EXPECT_LT(text.find("alpha"), text.find("zeta"));
}

TEST(Checkpoint, RoundTripWithAndWithoutHeads) {
  const TrainConfig tc = testing::tiny_train();
  Model m = Model::create(testing::tiny_detector(), tc, 31);
  testing::jitter_biases(m, 32);
  RunConfig rc;
  rc.detector = testing::tiny_detector();
  rc.train = tc;
  TempDir dir;
  save_checkpoint(dir.path(), m, rc, 17);

  LoadedCheckpoint full = load_checkpoint(dir.path(), true);
  EXPECT_EQ(full.iteration, 17);
  ASSERT_TRUE(full.model.heads.has_value());
  const ParamRefs a = m.parameters(), b = full.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;

  // Dropping the adaptation heads must not change inference.
  LoadedCheckpoint bare = load_checkpoint(dir.path());
  EXPECT_FALSE(bare.model.heads.has_value());
  Rng rng(33);
  const Image img = testing::noise_image(rng, 32, 48);
  const auto d1 = m.detector.detect(img, 0.0, 0.5);
  const auto d2 = bare.model.detector.detect(img, 0.0, 0.5);
  ASSERT_EQ(d1.size(), d2.size());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    EXPECT_EQ(d1[i].box, d2[i].box);
    EXPECT_EQ(d1[i].confidence, d2[i].confidence);
    EXPECT_EQ(d1[i].category, d2[i].category);
  }
}

TEST(Checkpoint, MissingDirectoryIsAnIoError) {
  TempDir dir;
  try {
    load_checkpoint(dir.path() / "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::kIo || e.kind() == ErrorKind::kConfiguration) << e.what();
  }
}

TEST(Fixture, DeterministicAndWellFormed) {
  FixtureConfig cfg;
  cfg.train_images = 3;
  cfg.val_images = 2;
  cfg.height = 64;
  cfg.width = 96;
  cfg.rain_maps = 2;
  cfg.seed = 9;
  TempDir a, b;
  make_fixture(a.path(), cfg);
  make_fixture(b.path(), cfg);
  for (const char* rel : {"annotations/train.json", "annotations/val.json", "images/train/000000.png",
                          "images/val/000001.png", "rain/streaks_01.png"})
    EXPECT_EQ(testing::read_file(a.path() / rel), testing::read_file(b.path() / rel)) << rel;

  const DatasetManifest m = ingest_dataset(a.path(), "train", true, fixture_categories());
  ASSERT_EQ(m.entries.size(), 3u);
  for (const auto& e : m.entries) {
    EXPECT_GE(e.annotations->size(), 1u);
    for (const auto& box : *e.annotations) {
      EXPECT_GE(box.box.x1, 0.0);
      EXPECT_LE(box.box.x2, 96.0);
      EXPECT_LE(box.box.y2, 64.0);
    }
  }
  const Image img = read_image(m.image_path(0));
  EXPECT_EQ(img.height(), 64);
  EXPECT_EQ(img.width(), 96);
}

}  // namespace
}  // namespace adet
