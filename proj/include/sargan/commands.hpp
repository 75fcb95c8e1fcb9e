#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sargan/data.hpp"
#include "sargan/metrics.hpp"
#include "sargan/run_config.hpp"
#include "sargan/training.hpp"

namespace sargan {

/// Root for default output locations: $SARGAN_OUTPUT_ROOT, else "runs".
std::filesystem::path default_output_root();

// Key schemas of the four commands. Path defaults are resolved against
// default_output_root() at call time.
std::vector<ConfigKey> synth_data_keys();
std::vector<ConfigKey> train_keys();
std::vector<ConfigKey> eval_keys();
std::vector<ConfigKey> generate_keys();

// Layout of a synthesized dataset directory.
inline constexpr const char* kManifestFile = "manifest.csv";
inline constexpr const char* kRunConfigFile = "run_config.txt";
inline constexpr const char* kLossLogFile = "loss_log.csv";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kGridFile = "grid.png";
std::filesystem::path patch_image_path(const std::filesystem::path& data_dir,
                                       const std::string& patch_id);
std::filesystem::path patch_mask_path(const std::filesystem::path& data_dir,
                                      const std::string& patch_id);

struct SynthDataSummary {
  std::size_t scenes = 0;
  std::size_t patches = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
};

/// Writes scenes/, patches/ and manifest.csv under out_dir. Throws
/// UsageError("empty dataset ...") when no patch can be produced.
SynthDataSummary cmd_synth_data(const RunConfig& config);

/// Patches of one split, in manifest order, converted to network space.
/// Throws DataError when the manifest or any listed file is missing.
std::vector<TrainingPair> load_split(const std::filesystem::path& data_dir, Split split);

// Largest d <= 8 with patch_size divisible by 2^d.
std::size_t auto_generator_depth(std::size_t patch_size);

TrainConfig train_config_from(const RunConfig& config, std::size_t patch_size);

/// Trains on the training split and writes ckpt_epoch{N}.bin and
/// loss_log.csv into out_dir.
TrainResult cmd_train(const RunConfig& config);

/// Scores every checkpoint in checkpoint_dir on the chosen split, writes
/// metrics.csv and, when enabled, grid.png (rows of mask | target |
/// prediction from the last readable checkpoint).
MetricsCurve cmd_eval(const RunConfig& config);

/// Synthesizes an image for a binary mask file, tiling it by the
/// checkpoint's patch size. Output values are in [0, 1].
Raster cmd_generate(const RunConfig& config);

/// Runs the generator over `mask` tile by tile; tile t draws its dropout
/// noise from stream t of `seed`.
Raster generate_tiled(NetworkState& generator, const SegmentationMask& mask, std::uint64_t seed,
                      bool stochastic);

}  // namespace sargan
