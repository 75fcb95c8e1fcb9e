#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sargan/networks.hpp"
#include "sargan/training.hpp"

namespace sargan {

/// Soft overlap 2 * sum(X * Y) / (sum(X) + sum(Y)) over all elements.
/// Two all-zero inputs score 1. Throws std::invalid_argument on differing
/// sizes or negative elements.
double dice_non_binary(std::span<const double> x, std::span<const double> y);
double dice_non_binary(const Tensor& x, const Tensor& y);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all fully contained Gaussian-weighted windows. Inputs are
/// single-channel images: rank 2 (H x W) or 1 x 1 x H x W. Throws
/// std::invalid_argument when the window does not fit.
double ssim(const Tensor& x, const Tensor& y, const SsimOptions& options = {});

// Normalised 1-D Gaussian taps used by ssim().
std::vector<double> gaussian_window(std::size_t size, double sigma);

// Maps generator space [-1, 1] to intensity space [0, 1]: (v + 1) / 2.
Tensor to_unit_range(const Tensor& t);

struct SampleScore {
  double dice = 0.0;
  double ssim = 0.0;
};

struct MetricsRecord {
  std::uint32_t epoch = 0;
  double mean_dice = 0.0;
  double mean_ssim = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_skipped = 0;  // samples dropped for shape mismatches
};

// Fixed-order means of per-sample scores.
MetricsRecord aggregate_scores(std::span<const SampleScore> scores, std::uint32_t epoch = 0);

// Scores one prediction against its target, both in generator space.
SampleScore score_prediction(const Tensor& prediction, const Tensor& target);

// Returns a prediction in generator space for validation sample `index`.
using Predictor = std::function<Tensor(const TrainingPair& sample, std::size_t index)>;

/// Runs `predict` on each validation sample and averages dice and SSIM
/// computed on the [0, 1]-mapped prediction and target. Samples whose
/// prediction shape differs from the target are skipped with a warning.
MetricsRecord evaluate_predictions(const Predictor& predict,
                                   std::span<const TrainingPair> validation,
                                   std::uint32_t epoch = 0);

/// evaluate_predictions with the generator in stochastic inference mode;
/// sample i draws its dropout noise from stream i of `seed`.
MetricsRecord evaluate_checkpoint(NetworkState& generator,
                                  std::span<const TrainingPair> validation, std::uint64_t seed,
                                  std::uint32_t epoch = 0);

struct CheckpointEntry {
  std::uint32_t epoch = 0;
  std::filesystem::path path;
};

// ckpt_epoch{N}.bin files in `dir`, ascending by epoch.
std::vector<CheckpointEntry> list_checkpoints(const std::filesystem::path& dir);

struct MissingCheckpoint {
  std::uint32_t epoch = 0;
  std::string reason;
};

struct MetricsCurve {
  std::vector<MetricsRecord> records;  // ascending epoch
  std::vector<MissingCheckpoint> missing;
};

/// One MetricsRecord per readable checkpoint; unreadable files are reported
/// in `missing`. Throws DataError when `checkpoints` is empty.
MetricsCurve metrics_curve(std::span<const CheckpointEntry> checkpoints,
                           std::span<const TrainingPair> validation, std::uint64_t seed);

// `epoch,mean_dice,mean_ssim,n_samples`
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace sargan
