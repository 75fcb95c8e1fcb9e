#include "sargan/training.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sargan/checkpoint.hpp"
#include "sargan/errors.hpp"

namespace sargan {

void adam_step(std::span<Parameter* const> params, OptimizerState& state,
               const AdamConfig& config) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const Parameter* p : params) {
      state.first_moment.push_back(Tensor::zeros_like(p->value));
      state.second_moment.push_back(Tensor::zeros_like(p->value));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.shape() != p.value.shape()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has no gradient of shape " +
                       shape_str(p.value.shape()));
    }
    if (state.first_moment[i].shape() != p.value.shape()) {
      throw ShapeError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
    }
    if (!p.grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i) +
                         " of shape " + shape_str(p.value.shape()) + " at step " +
                         std::to_string(state.step + 1));
    }
  }

  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p.value[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (checkpoint_interval < 1 || checkpoint_interval > epochs) {
    throw std::invalid_argument("checkpoint_interval must lie in [1, epochs]");
  }
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (discriminator_base_channels < 1) {
    throw std::invalid_argument("discriminator base channels must be >= 1");
  }
}

GanModels initialize_models(const TrainConfig& cfg, std::size_t patch_size) {
  Rng g_rng = derive_rng(cfg.seed, 1);
  Rng d_rng = derive_rng(cfg.seed, 2);
  GanModels models;
  models.generator = build_generator(cfg.variant, cfg.generator, g_rng);
  models.generator.spec.patch_size = patch_size;
  models.discriminator = build_discriminator(cfg.variant, d_rng, cfg.discriminator_base_channels);
  models.discriminator.spec.patch_size = patch_size;
  return models;
}

Rng training_rng(const TrainConfig& cfg) { return derive_rng(cfg.seed, 3); }

std::pair<double, double> update_discriminator(NetworkState& d, OptimizerState& opt,
                                               const Tensor& masks, const Tensor& targets,
                                               const Tensor& fakes, const AdamConfig& adam) {
  d.zero_grad();
  Tape tape;
  const ForwardOptions train = ForwardOptions::training();
  Var m = tape.constant(masks);
  Var d_real = discriminator_forward(tape, d, m, tape.constant(targets), train);
  Var d_fake = discriminator_forward(tape, d, m, tape.constant(fakes), train);
  Var real_term = neg_log_mean(d_real);
  Var fake_term = neg_log1m_mean(d_fake);
  tape.backward(add(real_term, fake_term));
  const auto params = d.parameters();
  adam_step(params, opt, adam);
  return {real_term.value()[0], fake_term.value()[0]};
}

LossBreakdown update_generator(Tape& tape, Var masks, Var fake, NetworkState& g,
                               OptimizerState& opt, NetworkState& d, const Tensor& targets,
                               const VariantConfig& cfg, const AdamConfig& adam) {
  g.zero_grad();
  ForwardOptions frozen = ForwardOptions::training();
  frozen.bind_gradients = false;
  frozen.update_running_stats = false;
  Var d_fake = discriminator_forward(tape, d, masks, fake, frozen);
  const GeneratorLoss loss = generator_loss(d_fake, fake, tape.constant(targets), cfg);
  tape.backward(loss.total);
  const auto params = g.parameters();
  adam_step(params, opt, adam);

  LossBreakdown out;
  out.g_gan_term = loss.gan.value()[0];
  out.g_l1_term = loss.l1.value()[0];
  out.g_total = loss.total.value()[0];
  return out;
}

LossBreakdown train_step(GanModels& models, std::span<const TrainingPair> batch,
                         const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  std::vector<Tensor> mask_list;
  std::vector<Tensor> target_list;
  for (const TrainingPair& p : batch) {
    mask_list.push_back(p.mask);
    target_list.push_back(p.target);
  }
  const Tensor masks = stack_batch(mask_list);
  const Tensor targets = stack_batch(target_list);
  if (masks.dim(2) != targets.dim(2) || masks.dim(3) != targets.dim(3)) {
    throw ShapeError("train_step: mask " + shape_str(masks.shape()) + " and target " +
                     shape_str(targets.shape()) + " differ spatially");
  }

  Tape tape;
  Var m = tape.constant(masks);
  Var fake = generator_forward(tape, models.generator, m, ForwardOptions::training(), rng);

  const auto [real, fake_loss] = update_discriminator(models.discriminator,
                                                      models.discriminator_opt, masks, targets,
                                                      fake.value(), cfg.adam);
  LossBreakdown out = update_generator(tape, m, fake, models.generator, models.generator_opt,
                                       models.discriminator, targets, cfg.variant, cfg.adam);
  out.d_loss_real = real;
  out.d_loss_fake = fake_loss;
  return out;
}

DirectoryCheckpointSink::DirectoryCheckpointSink(std::filesystem::path dir)
    : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

void DirectoryCheckpointSink::save(std::uint32_t epoch, const NetworkState& generator) {
  save_checkpoint(dir_ / checkpoint_filename(epoch), generator, epoch);
}

LossLogWriter::LossLogWriter(const std::filesystem::path& path)
    : out_(path, std::ios::out | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open loss log " + path.string());
  out_ << "epoch,d_loss,g_gan,g_l1,g_total\n";
  out_.flush();
}

void LossLogWriter::append(const EpochLoss& row) {
  out_ << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", row.epoch, row.d_loss, row.g_gan,
                      row.g_l1, row.g_total);
  out_.flush();
  if (!out_) throw std::runtime_error("failed to append to loss log");
}

std::vector<EpochLoss> read_loss_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open loss log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "epoch,d_loss,g_gan,g_l1,g_total") {
    throw DataError("loss log " + path.string() + " has unexpected header '" + line + "'");
  }
  std::vector<EpochLoss> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochLoss r;
    char c1, c2, c3, c4;
    std::istringstream ss(line);
    if (!(ss >> r.epoch >> c1 >> r.d_loss >> c2 >> r.g_gan >> c3 >> r.g_l1 >> c4 >> r.g_total)) {
      throw DataError("loss log " + path.string() + ": malformed line " +
                      std::to_string(line_no));
    }
    rows.push_back(r);
  }
  return rows;
}

TrainResult train(std::span<const TrainingPair> dataset, const TrainConfig& cfg,
                  CheckpointSink& sink, LossLogWriter* log) {
  cfg.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  const std::size_t patch = dataset.front().mask.rank() == 4 ? dataset.front().mask.dim(2) : 0;

  TrainResult result;
  result.models = initialize_models(cfg, patch);
  Rng rng = training_rng(cfg);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingPair> batch;

  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss row;
    row.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(dataset[order[i]]);
      }
      LossBreakdown step;
      try {
        step = train_step(result.models, batch, cfg, rng);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " aborted: " + e.what());
      }
      row.d_loss += step.d_loss_real + step.d_loss_fake;
      row.g_gan += step.g_gan_term;
      row.g_l1 += step.g_l1_term;
      row.g_total += step.g_total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    row.d_loss *= inv;
    row.g_gan *= inv;
    row.g_l1 *= inv;
    row.g_total *= inv;
    for (double v : {row.d_loss, row.g_gan, row.g_l1, row.g_total}) {
      if (!std::isfinite(v)) {
        throw NumericError("epoch " + std::to_string(epoch) + " produced a non-finite loss");
      }
    }
    result.log.push_back(row);
    if (log) log->append(row);
    spdlog::info("epoch {}/{}: d_loss {:.4f} g_gan {:.4f} g_l1 {:.4f} g_total {:.4f}", epoch,
                 cfg.epochs, row.d_loss, row.g_gan, row.g_l1, row.g_total);

    if (epoch % cfg.checkpoint_interval == 0 || epoch == cfg.epochs) {
      sink.save(epoch, result.models.generator);
      result.checkpoint_epochs.push_back(epoch);
    }
  }
  return result;
}

}  // namespace sargan
