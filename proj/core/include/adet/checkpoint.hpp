#pragma once

#include <filesystem>

#include "adet/config.hpp"
#include "adet/training.hpp"

namespace adet {

inline constexpr int kCheckpointFormatVersion = 1;

// Directory layout:
//   checkpoint.json  format_version, iteration, categories, has_adaptation_heads
//   weights.bin      named float64 tensors
//   config.json      RunConfig snapshot
//   iteration        iteration count as text
void save_checkpoint(const std::filesystem::path& dir, Model& model, const RunConfig& config, int iteration);

struct LoadedCheckpoint {
  Model model;
  RunConfig config;
  int iteration = 0;
};

// Adaptation heads are only restored when asked for; inference never needs them.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, bool with_adaptation_heads = false);

void write_weights(const std::filesystem::path& path, const ParamRefs& params);
void read_weights(const std::filesystem::path& path, const ParamRefs& params, bool allow_extra = true);

}  // namespace adet
