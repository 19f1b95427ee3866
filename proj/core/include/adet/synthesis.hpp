#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adet/random.hpp"
#include "adet/tensor.hpp"

namespace adet {

// Single-channel rain-streak intensity in [0, 1], row-major.
struct RainMap {
  int height = 0;
  int width = 0;
  std::vector<double> intensity;

  RainMap() = default;
  RainMap(int h, int w, double fill = 0.0);

  double at(int y, int x) const { return intensity[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) { return intensity[static_cast<std::size_t>(y) * width + x]; }
  void validate() const;

  friend bool operator==(const RainMap&, const RainMap&) = default;
};

class RainLibrary {
 public:
  RainLibrary() = default;
  RainLibrary(std::vector<RainMap> maps, std::vector<std::string> names);
  // Every *.png under dir, lexicographic order. Throws kConfiguration when none exist.
  static RainLibrary load(const std::filesystem::path& dir);

  std::size_t size() const noexcept { return maps_.size(); }
  const RainMap& map(std::size_t i) const { return maps_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  // Uniform choice; the chosen index is written to *chosen when given.
  const RainMap& sample(Rng& rng, std::size_t* chosen = nullptr) const;

 private:
  std::vector<RainMap> maps_;
  std::vector<std::string> names_;
};

RainMap sample_rain_map(const std::filesystem::path& library_dir, Rng& rng);

// Geometric transform about the map centre: rotation (degrees, counter-clockwise as
// displayed), isotropic zoom, shear along x (degrees), translation as a fraction of the extent.
struct AffineParams {
  double rotate_deg = 0.0;
  double zoom = 1.0;
  double shear_deg = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
};

// Inverse-mapped bilinear warp; samples falling outside the source read as 0.
RainMap transform_rain_map(const RainMap& map, const AffineParams& params);
RainMap resize_rain_map(const RainMap& map, int height, int width);

struct RainMixConfig {
  int chains = 3;
  int max_depth = 3;
  double max_rotate_deg = 30.0;
  double zoom_min = 0.8;
  double zoom_max = 1.2;
  double max_translate = 0.1;
  double max_shear_deg = 10.0;
  double mix_weight_min = 0.5;  // weight of the transformed mixture against the untouched map
  double mix_weight_max = 1.0;

  // All ranges collapsed to the identity transform.
  static RainMixConfig identity();
};

struct RainMixTrace {
  std::vector<double> chain_weights;
  std::vector<std::vector<std::string>> chain_ops;
  double mix_weight = 0.0;
};

// Convex combination of `chains` random transform chains plus a skip connection to
// the input map, clipped to [0, 1].
RainMap rainmix_transform(const RainMap& map, Rng& rng, const RainMixConfig& cfg = {},
                          RainMixTrace* trace = nullptr);

inline constexpr double kBlendWeightMin = 0.5;
inline constexpr double kBlendWeightMax = 1.0;

// clip(source + weight * map, 0, 1); sizes must match.
Image blend_rain_weighted(const Image& source, const RainMap& map, double weight);
// Resizes the map to the source, draws the weight from [0.5, 1.0], then blends.
Image blend_rain(const Image& source, const RainMap& map, Rng& rng, double* weight_out = nullptr);

// Uniform-depth atmospheric scattering: source * t + light * (1 - t), t = exp(-density).
Image synthesize_fog(const Image& source, double density, double atmospheric_light);

enum class FogPreset { kLight, kMedium, kHeavy };
double fog_density(FogPreset preset);
const char* to_string(FogPreset preset);
FogPreset parse_fog_preset(const std::string& text);

struct AuxiliaryResult {
  Image image;
  std::size_t map_index = 0;
  double blend_weight = 0.0;
  RainMixTrace trace;
};

// sample -> transform -> blend, a pure function of (source, library, seed).
AuxiliaryResult synthesize_auxiliary(const Image& source, const RainLibrary& library, std::uint64_t seed,
                                     const RainMixConfig& cfg = {});

// Procedural slanted streak pattern, used for the bundled rain library.
RainMap generate_rain_streaks(int height, int width, Rng& rng);

}  // namespace adet
