#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "adet/config.hpp"
#include "adet/dataset.hpp"
#include "adet/error.hpp"
#include "adet/evaluation.hpp"
#include "adet/image_io.hpp"
#include "adet/synthesis.hpp"

namespace adet {

namespace {

enum class Shape { kCircle, kSquare, kTriangle };

std::array<double, 3> vivid_color(Rng& rng) {
  // Random hue at high saturation so colour carries no class information.
  const double h = rng.uniform(0.0, 6.0);
  const double v = rng.uniform(0.75, 1.0);
  const double lo = rng.uniform(0.0, 0.2);
  const double f = h - std::floor(h);
  std::array<double, 3> c{};
  switch (static_cast<int>(h)) {
    case 0: c = {v, lo + (v - lo) * f, lo}; break;
    case 1: c = {lo + (v - lo) * (1 - f), v, lo}; break;
    case 2: c = {lo, v, lo + (v - lo) * f}; break;
    case 3: c = {lo, lo + (v - lo) * (1 - f), v}; break;
    case 4: c = {lo + (v - lo) * f, lo, v}; break;
    default: c = {v, lo, lo + (v - lo) * (1 - f)}; break;
  }
  return c;
}

bool inside(Shape shape, const Box& b, double px, double py) {
  switch (shape) {
    case Shape::kCircle: {
      const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2), r = 0.5 * b.width();
      return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
    }
    case Shape::kSquare:
      return px >= b.x1 && px <= b.x2 && py >= b.y1 && py <= b.y2;
    case Shape::kTriangle: {
      if (py < b.y1 || py > b.y2) return false;
      const double t = (py - b.y1) / b.height();
      const double cx = 0.5 * (b.x1 + b.x2);
      const double half = 0.5 * b.width() * t;
      return px >= cx - half && px <= cx + half;
    }
  }
  return false;
}

}  // namespace

std::vector<std::string> fixture_categories() { return {"circle", "square", "triangle"}; }

Image render_fixture_image(Rng& rng, int height, int width, std::vector<BoxAnnotation>* boxes) {
  Image img(height, width);
  std::array<double, 3> base{rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6)};
  const double fx = rng.uniform(0.02, 0.08), fy = rng.uniform(0.02, 0.08);
  const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
  const double gx = rng.uniform(-0.1, 0.1), gy = rng.uniform(-0.1, 0.1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double texture = 0.06 * std::sin(fx * x + phase) * std::cos(fy * y) + gx * x / width + gy * y / height;
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = std::clamp(base[c] + texture + rng.uniform(-0.04, 0.04), 0.0, 1.0);
    }

  const auto names = fixture_categories();
  const int count = 1 + static_cast<int>(rng.index(4));
  std::vector<Box> placed;
  for (int o = 0; o < count; ++o) {
    const auto shape = static_cast<Shape>(rng.index(3));
    Box b;
    bool ok = false;
    for (int attempt = 0; attempt < 30 && !ok; ++attempt) {
      const double w = rng.uniform(24.0, 64.0);
      const double h = shape == Shape::kCircle ? w : w * rng.uniform(0.75, 1.3);
      if (h > height - 4 || w > width - 4) continue;
      const double x1 = std::floor(rng.uniform(2.0, width - w - 2.0));
      const double y1 = std::floor(rng.uniform(2.0, height - h - 2.0));
      b = {x1, y1, x1 + std::round(w), y1 + std::round(h)};
      ok = std::all_of(placed.begin(), placed.end(), [&](const Box& p) { return compute_iou(p, b) < 0.05; });
    }
    if (!ok) continue;
    placed.push_back(b);
    const auto color = vivid_color(rng);
    for (int y = static_cast<int>(b.y1); y < static_cast<int>(std::ceil(b.y2)); ++y)
      for (int x = static_cast<int>(b.x1); x < static_cast<int>(std::ceil(b.x2)); ++x)
        if (inside(shape, b, x + 0.5, y + 0.5))
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(color[c] + rng.uniform(-0.03, 0.03), 0.0, 1.0);
    if (boxes) boxes->push_back({names[static_cast<int>(shape)], b});
  }
  return img;
}

void make_fixture(const std::filesystem::path& out, const FixtureConfig& cfg) {
  require(cfg.train_images >= 0 && cfg.val_images >= 0 && cfg.rain_maps >= 1, ErrorKind::kConfiguration,
          "invalid fixture sizes");
  std::uint64_t index = 0;
  for (const auto& [split, n] : {std::pair<std::string, int>{"train", cfg.train_images}, {"val", cfg.val_images}}) {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(cfg.seed, index++));
      std::vector<BoxAnnotation> boxes;
      const Image img = render_fixture_image(rng, cfg.height, cfg.width, &boxes);
      char name[32];
      std::snprintf(name, sizeof(name), "%06d.png", i);
      write_image(out / "images" / split / name, img);
      entries.push_back({name, std::move(boxes)});
    }
    write_json_file(out / "annotations" / (split + ".json"), annotations_to_json(entries));
  }
  for (int i = 0; i < cfg.rain_maps; ++i) {
    Rng rng(derive_seed(cfg.seed ^ 0x5241494EULL, static_cast<std::uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof(name), "streaks_%02d.png", i);
    write_rain_map(out / "rain" / name, generate_rain_streaks(cfg.height, cfg.width, rng));
  }
}

}  // namespace adet
