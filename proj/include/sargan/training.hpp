#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "sargan/networks.hpp"
#include "sargan/objective.hpp"

namespace sargan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter.
struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Throws NumericError (leaving every parameter untouched) when a gradient
/// holds NaN or Inf.
void adam_step(std::span<Parameter* const> params, OptimizerState& state,
               const AdamConfig& config);

struct TrainConfig {
  std::uint32_t epochs = 300;
  std::uint32_t checkpoint_interval = 15;
  AdamConfig adam;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  VariantConfig variant = variant_by_name("orig");
  GeneratorOptions generator;
  std::size_t discriminator_base_channels = 64;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Mask and target image in network space: 1 x C x H x W, values in [-1, 1].
struct TrainingPair {
  Tensor mask;
  Tensor target;
};

struct GanModels {
  NetworkState generator;
  NetworkState discriminator;
  OptimizerState generator_opt;
  OptimizerState discriminator_opt;
};

// Builds G and D from streams derived from cfg.seed.
GanModels initialize_models(const TrainConfig& cfg, std::size_t patch_size = 0);

// The run's shuffling/dropout stream, derived from cfg.seed.
Rng training_rng(const TrainConfig& cfg);

/// One discriminator update on real pairs and (already detached) fake pairs.
/// Only discriminator parameters and statistics change. Returns
/// {d_loss_real, d_loss_fake}.
std::pair<double, double> update_discriminator(NetworkState& d, OptimizerState& opt,
                                               const Tensor& masks, const Tensor& targets,
                                               const Tensor& fakes, const AdamConfig& adam);

/// One generator update given the generator's output `fake` recorded on
/// `tape`. The discriminator is read frozen (no gradient, no statistics
/// update), so only generator parameters change.
LossBreakdown update_generator(Tape& tape, Var masks, Var fake, NetworkState& g,
                               OptimizerState& opt, NetworkState& d, const Tensor& targets,
                               const VariantConfig& cfg, const AdamConfig& adam);

/// Discriminator update followed by generator update on one batch.
LossBreakdown train_step(GanModels& models, std::span<const TrainingPair> batch,
                         const TrainConfig& cfg, Rng& rng);

struct EpochLoss {
  std::uint32_t epoch = 0;
  double d_loss = 0.0;  // real + fake, averaged over the epoch's batches
  double g_gan = 0.0;
  double g_l1 = 0.0;
  double g_total = 0.0;
};

class CheckpointSink {
 public:
  virtual ~CheckpointSink() = default;
  virtual void save(std::uint32_t epoch, const NetworkState& generator) = 0;
};

// Writes ckpt_epoch{N}.bin files into a directory.
class DirectoryCheckpointSink : public CheckpointSink {
 public:
  explicit DirectoryCheckpointSink(std::filesystem::path dir);
  void save(std::uint32_t epoch, const NetworkState& generator) override;

 private:
  std::filesystem::path dir_;
};

// Append-only CSV `epoch,d_loss,g_gan,g_l1,g_total`, flushed per row.
class LossLogWriter {
 public:
  explicit LossLogWriter(const std::filesystem::path& path);
  void append(const EpochLoss& row);

 private:
  std::ofstream out_;
};

std::vector<EpochLoss> read_loss_log(const std::filesystem::path& path);

struct TrainResult {
  GanModels models;
  std::vector<EpochLoss> log;
  std::vector<std::uint32_t> checkpoint_epochs;
};

/// Runs cfg.epochs epochs of shuffled mini-batches, saving the generator at
/// every multiple of cfg.checkpoint_interval and after the final epoch.
TrainResult train(std::span<const TrainingPair> dataset, const TrainConfig& cfg,
                  CheckpointSink& sink, LossLogWriter* log = nullptr);

}  // namespace sargan
