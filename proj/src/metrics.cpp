#include "sargan/metrics.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "sargan/checkpoint.hpp"
#include "sargan/errors.hpp"

namespace sargan {

double dice_non_binary(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("dice: inputs hold " + std::to_string(x.size()) + " and " +
                                std::to_string(y.size()) + " elements");
  }
  double overlap = 0.0;
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0 || y[i] < 0.0) {
      throw std::invalid_argument("dice: negative element at index " + std::to_string(i));
    }
    overlap += x[i] * y[i];
    sx += x[i];
    sy += y[i];
  }
  if (sx + sy == 0.0) return 1.0;
  return 2.0 * overlap / (sx + sy);
}

double dice_non_binary(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw std::invalid_argument("dice: shapes " + shape_str(x.shape()) + " and " +
                                shape_str(y.shape()) + " differ");
  }
  return dice_non_binary(x.data(), y.data());
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

struct Plane {
  std::size_t height;
  std::size_t width;
};

Plane single_channel_plane(const Tensor& t) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) return {t.dim(2), t.dim(3)};
  throw std::invalid_argument("ssim: expected HxW or 1x1xHxW, got " + shape_str(t.shape()));
}

// Separable "valid" filtering: output is (H - n + 1) x (W - n + 1).
std::vector<double> filter_valid(const std::vector<double>& img, Plane p,
                                 const std::vector<double>& taps) {
  const std::size_t n = taps.size();
  const std::size_t oh = p.height - n + 1;
  const std::size_t ow = p.width - n + 1;
  std::vector<double> rows(p.height * ow);
  for (std::size_t y = 0; y < p.height; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += taps[k] * img[y * p.width + x + k];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y, const SsimOptions& options) {
  const Plane p = single_channel_plane(x);
  const Plane q = single_channel_plane(y);
  if (p.height != q.height || p.width != q.width) {
    throw std::invalid_argument("ssim: image sizes differ");
  }
  if (options.window == 0 || options.window > p.height || options.window > p.width) {
    throw std::invalid_argument("ssim: window " + std::to_string(options.window) +
                                " larger than image " + std::to_string(p.height) + "x" +
                                std::to_string(p.width));
  }
  const std::vector<double> taps = gaussian_window(options.window, options.sigma);
  const std::size_t n = x.size();
  std::vector<double> a(x.data().begin(), x.data().end());
  std::vector<double> b(y.data().begin(), y.data().end());
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, p, taps);
  const auto mu_b = filter_valid(b, p, taps);
  const auto e_aa = filter_valid(aa, p, taps);
  const auto e_bb = filter_valid(bb, p, taps);
  const auto e_ab = filter_valid(ab, p, taps);

  const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
  const double c2 = std::pow(options.k2 * options.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

Tensor to_unit_range(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) v = (v + 1.0) * 0.5;
  return out;
}

MetricsRecord aggregate_scores(std::span<const SampleScore> scores, std::uint32_t epoch) {
  MetricsRecord r;
  r.epoch = epoch;
  r.n_samples = scores.size();
  if (scores.empty()) return r;
  for (const SampleScore& s : scores) {
    r.mean_dice += s.dice;
    r.mean_ssim += s.ssim;
  }
  r.mean_dice /= static_cast<double>(scores.size());
  r.mean_ssim /= static_cast<double>(scores.size());
  return r;
}

SampleScore score_prediction(const Tensor& prediction, const Tensor& target) {
  // Clamp absorbs rounding just outside [-1, 1] so dice never sees negatives.
  Tensor p = to_unit_range(prediction);
  for (double& v : p.data()) v = std::clamp(v, 0.0, 1.0);
  const Tensor t = to_unit_range(target);
  return {dice_non_binary(p, t), ssim(p, t)};
}

MetricsRecord evaluate_predictions(const Predictor& predict,
                                   std::span<const TrainingPair> validation,
                                   std::uint32_t epoch) {
  if (validation.empty()) throw DataError("evaluation needs a non-empty validation set");
  std::vector<SampleScore> scores;
  scores.reserve(validation.size());
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const TrainingPair& sample = validation[i];
    Tensor pred;
    try {
      pred = predict(sample, i);
    } catch (const ShapeError& e) {
      spdlog::warn("validation sample {} skipped: {}", i, e.what());
      ++skipped;
      continue;
    }
    if (pred.shape() != sample.target.shape()) {
      spdlog::warn("validation sample {} skipped: prediction {} vs target {}", i,
                   shape_str(pred.shape()), shape_str(sample.target.shape()));
      ++skipped;
      continue;
    }
    scores.push_back(score_prediction(pred, sample.target));
  }
  MetricsRecord r = aggregate_scores(scores, epoch);
  r.n_skipped = skipped;
  return r;
}

MetricsRecord evaluate_checkpoint(NetworkState& generator,
                                  std::span<const TrainingPair> validation, std::uint64_t seed,
                                  std::uint32_t epoch) {
  const ForwardOptions opts = ForwardOptions::stochastic_inference();
  return evaluate_predictions(
      [&](const TrainingPair& sample, std::size_t index) {
        Rng rng = derive_rng(seed, index);
        return generate(generator, sample.mask, opts, rng);
      },
      validation, epoch);
}

std::vector<CheckpointEntry> list_checkpoints(const std::filesystem::path& dir) {
  static const std::regex pattern(R"(ckpt_epoch(\d+)\.bin)");
  std::vector<CheckpointEntry> out;
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("checkpoint directory " + dir.string() + " does not exist");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) {
      out.push_back({static_cast<std::uint32_t>(std::stoul(m[1].str())), entry.path()});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const CheckpointEntry& a, const CheckpointEntry& b) { return a.epoch < b.epoch; });
  return out;
}

MetricsCurve metrics_curve(std::span<const CheckpointEntry> checkpoints,
                           std::span<const TrainingPair> validation, std::uint64_t seed) {
  if (checkpoints.empty()) throw DataError("metrics curve needs at least one checkpoint");
  MetricsCurve curve;
  for (const CheckpointEntry& entry : checkpoints) {
    Checkpoint ck;
    try {
      ck = load_checkpoint(entry.path);
    } catch (const DataError& e) {
      spdlog::warn("epoch {} missing from curve: {}", entry.epoch, e.what());
      curve.missing.push_back({entry.epoch, e.what()});
      continue;
    }
    curve.records.push_back(evaluate_checkpoint(ck.state, validation, seed, entry.epoch));
  }
  return curve;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics CSV " + path.string());
  out << "epoch,mean_dice,mean_ssim,n_samples\n";
  for (const MetricsRecord& r : records) {
    out << fmt::format("{},{:.17g},{:.17g},{}\n", r.epoch, r.mean_dice, r.mean_ssim, r.n_samples);
  }
  out.close();
  if (!out) throw std::runtime_error("failed writing metrics CSV " + path.string());
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics CSV " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "epoch,mean_dice,mean_ssim,n_samples") {
    throw DataError("metrics CSV " + path.string() + " has unexpected header '" + line + "'");
  }
  std::vector<MetricsRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    MetricsRecord r;
    char c1, c2, c3;
    std::istringstream ss(line);
    if (!(ss >> r.epoch >> c1 >> r.mean_dice >> c2 >> r.mean_ssim >> c3 >> r.n_samples)) {
      throw DataError("metrics CSV " + path.string() + ": malformed line " +
                      std::to_string(line_no));
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace sargan
