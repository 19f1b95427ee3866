#include "adet/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adet/error.hpp"
#include "adet/image_io.hpp"

namespace adet {

namespace {

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

// Bilinear read with zero outside the map.
double sample_bilinear(const RainMap& map, double x, double y) {
  x = snap(x);
  y = snap(y);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  double out = 0.0;
  const int xs[2] = {x0, x0 + 1};
  const int ys[2] = {y0, y0 + 1};
  const double wx[2] = {1.0 - fx, fx};
  const double wy[2] = {1.0 - fy, fy};
  for (int j = 0; j < 2; ++j) {
    if (wy[j] == 0.0 || ys[j] < 0 || ys[j] >= map.height) continue;
    for (int i = 0; i < 2; ++i) {
      if (wx[i] == 0.0 || xs[i] < 0 || xs[i] >= map.width) continue;
      out += wy[j] * wx[i] * map.at(ys[j], xs[i]);
    }
  }
  return out;
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

AffineParams random_op(Rng& rng, const RainMixConfig& cfg, std::string& name) {
  AffineParams p;
  switch (rng.index(4)) {
    case 0:
      p.rotate_deg = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg);
      name = "rotate";
      break;
    case 1:
      p.zoom = rng.uniform(cfg.zoom_min, cfg.zoom_max);
      name = "zoom";
      break;
    case 2:
      p.translate_x = rng.uniform(-cfg.max_translate, cfg.max_translate);
      p.translate_y = rng.uniform(-cfg.max_translate, cfg.max_translate);
      name = "translate";
      break;
    default:
      p.shear_deg = rng.uniform(-cfg.max_shear_deg, cfg.max_shear_deg);
      name = "shear";
      break;
  }
  return p;
}

}  // namespace

RainMap::RainMap(int h, int w, double fill) : height(h), width(w), intensity(static_cast<std::size_t>(h) * w, fill) {
  require(h > 0 && w > 0, ErrorKind::kInvalidInput, "rain map extents must be positive");
}

void RainMap::validate() const {
  require(height > 0 && width > 0 && intensity.size() == static_cast<std::size_t>(height) * width,
          ErrorKind::kInvalidInput, "rain map storage does not match its extents");
  for (double v : intensity)
    require(v >= 0.0 && v <= 1.0, ErrorKind::kInvalidInput, "rain map value outside [0, 1]");
}

RainLibrary::RainLibrary(std::vector<RainMap> maps, std::vector<std::string> names)
    : maps_(std::move(maps)), names_(std::move(names)) {
  require(!maps_.empty(), ErrorKind::kConfiguration, "rain library is empty");
  require(maps_.size() == names_.size(), ErrorKind::kContract, "one name per rain map required");
}

RainLibrary RainLibrary::load(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::kConfiguration,
          "rain library directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorKind::kConfiguration, "rain library has no .png maps: " + dir.string());
  std::vector<RainMap> maps;
  std::vector<std::string> names;
  for (const auto& f : files) {
    maps.push_back(read_rain_map(f));
    names.push_back(f.filename().string());
  }
  return RainLibrary(std::move(maps), std::move(names));
}

const RainMap& RainLibrary::sample(Rng& rng, std::size_t* chosen) const {
  require(!maps_.empty(), ErrorKind::kConfiguration, "rain library is empty");
  const std::size_t i = rng.index(maps_.size());
  if (chosen) *chosen = i;
  return maps_[i];
}

RainMap sample_rain_map(const std::filesystem::path& library_dir, Rng& rng) {
  return RainLibrary::load(library_dir).sample(rng);
}

RainMap transform_rain_map(const RainMap& map, const AffineParams& params) {
  require(params.zoom > 0.0, ErrorKind::kInvalidInput, "zoom must be positive");
  const double c = std::cos(deg2rad(params.rotate_deg));
  const double s = std::sin(deg2rad(params.rotate_deg));
  const double sh = std::tan(deg2rad(params.shear_deg));
  // Forward A = R * Shear * Zoom; R is counter-clockwise on screen (y grows downward).
  const double a00 = params.zoom * c;
  const double a01 = params.zoom * (c * sh + s);
  const double a10 = params.zoom * -s;
  const double a11 = params.zoom * (-s * sh + c);
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;

  const double cx = 0.5 * (map.width - 1);
  const double cy = 0.5 * (map.height - 1);
  const double tx = params.translate_x * map.width;
  const double ty = params.translate_y * map.height;

  RainMap out(map.height, map.width);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double dx = x - cx - tx;
      const double dy = y - cy - ty;
      const double sx = cx + i00 * dx + i01 * dy;
      const double sy = cy + i10 * dx + i11 * dy;
      out.at(y, x) = std::clamp(sample_bilinear(map, sx, sy), 0.0, 1.0);
    }
  }
  return out;
}

RainMap resize_rain_map(const RainMap& map, int height, int width) {
  if (map.height == height && map.width == width) return map;
  RainMap out(height, width);
  const double sx = static_cast<double>(map.width) / width;
  const double sy = static_cast<double>(map.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, map.height - 1.0);
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, map.width - 1.0);
      out.at(y, x) = std::clamp(sample_bilinear(map, fx, fy), 0.0, 1.0);
    }
  }
  return out;
}

RainMixConfig RainMixConfig::identity() {
  RainMixConfig cfg;
  cfg.max_rotate_deg = 0.0;
  cfg.zoom_min = cfg.zoom_max = 1.0;
  cfg.max_translate = 0.0;
  cfg.max_shear_deg = 0.0;
  return cfg;
}

RainMap rainmix_transform(const RainMap& map, Rng& rng, const RainMixConfig& cfg, RainMixTrace* trace) {
  map.validate();
  require(cfg.chains >= 1 && cfg.max_depth >= 1, ErrorKind::kConfiguration, "rainmix needs >= 1 chain of depth >= 1");
  const auto weights = rng.simplex(static_cast<std::size_t>(cfg.chains));
  std::vector<double> mix(map.intensity.size(), 0.0);
  if (trace) {
    trace->chain_weights = weights;
    trace->chain_ops.assign(weights.size(), {});
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const std::size_t depth = 1 + rng.index(static_cast<std::size_t>(cfg.max_depth));
    RainMap chain = map;
    for (std::size_t d = 0; d < depth; ++d) {
      std::string name;
      const AffineParams op = random_op(rng, cfg, name);
      chain = transform_rain_map(chain, op);
      if (trace) trace->chain_ops[k].push_back(name);
    }
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += weights[k] * chain.intensity[i];
  }
  const double m = rng.uniform(cfg.mix_weight_min, cfg.mix_weight_max);
  if (trace) trace->mix_weight = m;
  RainMap out(map.height, map.width);
  for (std::size_t i = 0; i < mix.size(); ++i)
    out.intensity[i] = std::clamp((1.0 - m) * map.intensity[i] + m * mix[i], 0.0, 1.0);
  return out;
}

Image blend_rain_weighted(const Image& source, const RainMap& map, double weight) {
  require(map.height == source.height() && map.width == source.width(), ErrorKind::kContract,
          "rain map and image sizes differ");
  Image out = source;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < source.height(); ++y)
      for (int x = 0; x < source.width(); ++x)
        out.at(c, y, x) = std::clamp(source.at(c, y, x) + weight * map.at(y, x), 0.0, 1.0);
  return out;
}

Image blend_rain(const Image& source, const RainMap& map, Rng& rng, double* weight_out) {
  const RainMap sized = resize_rain_map(map, source.height(), source.width());
  const double w = rng.uniform(kBlendWeightMin, kBlendWeightMax);
  if (weight_out) *weight_out = w;
  return blend_rain_weighted(source, sized, w);
}

Image synthesize_fog(const Image& source, double density, double atmospheric_light) {
  require(density >= 0.0, ErrorKind::kInvalidInput, "fog density must be non-negative");
  require(atmospheric_light >= 0.0 && atmospheric_light <= 1.0, ErrorKind::kInvalidInput,
          "atmospheric light must lie in [0, 1]");
  const double t = std::exp(-density);
  Image out = source;
  for (double& v : out.mutable_pixels().values()) v = std::clamp(v * t + atmospheric_light * (1.0 - t), 0.0, 1.0);
  return out;
}

double fog_density(FogPreset preset) {
  switch (preset) {
    case FogPreset::kLight: return 0.5;
    case FogPreset::kMedium: return 1.0;
    case FogPreset::kHeavy: return 1.5;
  }
  return 0.0;
}

const char* to_string(FogPreset preset) {
  switch (preset) {
    case FogPreset::kLight: return "light";
    case FogPreset::kMedium: return "medium";
    case FogPreset::kHeavy: return "heavy";
  }
  return "unknown";
}

FogPreset parse_fog_preset(const std::string& text) {
  if (text == "light") return FogPreset::kLight;
  if (text == "medium") return FogPreset::kMedium;
  if (text == "heavy") return FogPreset::kHeavy;
  fail(ErrorKind::kConfiguration, "unknown fog preset '" + text + "'");
}

AuxiliaryResult synthesize_auxiliary(const Image& source, const RainLibrary& library, std::uint64_t seed,
                                     const RainMixConfig& cfg) {
  Rng rng(seed);
  AuxiliaryResult result;
  const RainMap& raw = library.sample(rng, &result.map_index);
  const RainMap mixed = rainmix_transform(raw, rng, cfg, &result.trace);
  result.image = blend_rain(source, mixed, rng, &result.blend_weight);
  return result;
}

RainMap generate_rain_streaks(int height, int width, Rng& rng) {
  RainMap map(height, width);
  const double angle = deg2rad(rng.uniform(-20.0, 20.0));
  const double dx = std::sin(angle);
  const double dy = std::cos(angle);
  const int streaks = static_cast<int>(height * width / 180);
  for (int s = 0; s < streaks; ++s) {
    const double x0 = rng.uniform(0.0, width);
    const double y0 = rng.uniform(0.0, height);
    const double length = rng.uniform(6.0, 22.0);
    const double brightness = rng.uniform(0.25, 0.8);
    for (double t = 0.0; t < length; t += 0.5) {
      const int x = static_cast<int>(x0 + dx * t);
      const int y = static_cast<int>(y0 + dy * t);
      if (x < 0 || x >= width || y < 0 || y >= height) break;
      map.at(y, x) = std::max(map.at(y, x), brightness);
    }
  }
  return map;
}

}  // namespace adet
