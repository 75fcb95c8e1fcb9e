#include "sargan/commands.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

#include "sargan/checkpoint.hpp"
#include "sargan/errors.hpp"
#include "sargan/raster_io.hpp"

namespace sargan {

namespace fs = std::filesystem;

fs::path default_output_root() {
  const char* env = std::getenv("SARGAN_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

std::vector<ConfigKey> synth_data_keys() {
  const fs::path root = default_output_root();
  return {
      {"out_dir", (root / "data").string(), "dataset output directory"},
      {"n_scenes", "8", "number of synthetic scenes"},
      {"width", "512", "scene width in pixels"},
      {"height", "512", "scene height in pixels"},
      {"patch_size", "256", "square patch edge length"},
      {"split_ratio", "0.9", "fraction of patches assigned to training"},
      {"seed", "0", "random seed for scenes and split"},
  };
}

std::vector<ConfigKey> train_keys() {
  const fs::path root = default_output_root();
  return {
      {"data_dir", (root / "data").string(), "dataset directory from synth-data"},
      {"out_dir", (root / "train").string(), "checkpoint and loss log directory"},
      {"variant", "orig", "orig, gen5, dis3, l11gan100 or l150gan50"},
      {"epochs", "300", "training epochs"},
      {"checkpoint_interval", "15", "save the generator every N epochs"},
      {"learning_rate", "0.0002", "Adam learning rate"},
      {"adam_beta1", "0.5", "Adam first moment decay"},
      {"adam_beta2", "0.999", "Adam second moment decay"},
      {"batch_size", "1", "pairs per update"},
      {"seed", "0", "random seed for initialization, shuffling and dropout"},
      {"base_channels", "64", "generator width of the first layer"},
      {"discriminator_base_channels", "64", "discriminator width of the first layer"},
      {"generator_depth", "0", "encoder layers; 0 derives it from the patch size"},
  };
}

std::vector<ConfigKey> eval_keys() {
  const fs::path root = default_output_root();
  return {
      {"checkpoint_dir", (root / "train").string(), "directory holding ckpt_epoch*.bin"},
      {"data_dir", (root / "data").string(), "dataset directory from synth-data"},
      {"out_dir", (root / "eval").string(), "metrics output directory"},
      {"split", "validation", "validation or train"},
      {"seed", "0", "dropout noise seed for the generator"},
      {"grid", "true", "write grid.png for the last checkpoint"},
      {"grid_samples", "4", "rows in grid.png"},
  };
}

std::vector<ConfigKey> generate_keys() {
  return {
      {"checkpoint", "", "generator checkpoint file"},
      {"mask", "", "binary mask image (.png or .sras)"},
      {"out", "", "output image path (.png or .sras)"},
      {"seed", "0", "dropout noise seed"},
      {"stochastic", "true", "keep dropout active as the noise input"},
  };
}

fs::path patch_image_path(const fs::path& data_dir, const std::string& patch_id) {
  return data_dir / "patches" / (patch_id + "_image.png");
}

fs::path patch_mask_path(const fs::path& data_dir, const std::string& patch_id) {
  return data_dir / "patches" / (patch_id + "_mask.png");
}

namespace {

std::size_t positive(const RunConfig& c, const std::string& key) {
  const std::uint64_t v = c.get_uint(key);
  if (v == 0) throw UsageError("config key '" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

fs::path required_path(const RunConfig& c, const std::string& key) {
  const std::string& v = c.get(key);
  if (v.empty()) throw UsageError("config key '" + key + "' is required");
  return v;
}

Split parse_split(const std::string& s) {
  if (s == "validation") return Split::validation;
  if (s == "train") return Split::train;
  throw UsageError("split must be 'validation' or 'train', got '" + s + "'");
}

}  // namespace

SynthDataSummary cmd_synth_data(const RunConfig& config) {
  const fs::path out = required_path(config, "out_dir");
  const std::size_t n_scenes = static_cast<std::size_t>(config.get_uint("n_scenes"));
  const std::size_t width = positive(config, "width");
  const std::size_t height = positive(config, "height");
  const std::size_t patch = positive(config, "patch_size");
  const double ratio = config.get_double("split_ratio");
  const std::uint64_t seed = config.get_uint("seed");
  if (n_scenes == 0) throw UsageError("empty dataset: n_scenes must be >= 1");
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("split_ratio must lie strictly in (0, 1)");
  if (width < 64 || height < 64) throw UsageError("scene width and height must be >= 64");

  fs::create_directories(out / "scenes");
  fs::create_directories(out / "patches");
  std::vector<PatchRecord> records;
  for (std::size_t s = 0; s < n_scenes; ++s) {
    const std::string scene_id = fmt::format("scene{:03d}", s);
    Rng rng = derive_rng(seed, s);
    const Scene scene = synth_scene(width, height, rng);
    save_raster(scene.image, out / "scenes" / (scene_id + "_image.png"));
    save_mask(scene.mask, out / "scenes" / (scene_id + "_mask.png"));
    for (const PairedPatch& p : extract_patches(scene.image, scene.mask, patch, scene_id)) {
      const std::string id =
          fmt::format("{}_x{}_y{}", scene_id, p.provenance.offset_x, p.provenance.offset_y);
      save_raster(p.image, patch_image_path(out, id));
      save_mask(p.mask, patch_mask_path(out, id));
      records.push_back({id, p.provenance});
    }
  }
  if (records.empty()) {
    throw UsageError("empty dataset: scenes are smaller than patch_size " + std::to_string(patch));
  }
  // Split with a stream distinct from every scene's.
  const DatasetManifest manifest =
      split_dataset(records, ratio, derive_rng(seed, n_scenes)());
  write_manifest(out / kManifestFile, manifest);
  config.write(out / kRunConfigFile);

  SynthDataSummary summary{n_scenes, records.size(), manifest.count(Split::train),
                           manifest.count(Split::validation)};
  spdlog::info("synth-data: {} scenes, {} patches ({} train / {} validation) in {}", n_scenes,
               summary.patches, summary.train, summary.validation, out.string());
  return summary;
}

std::vector<TrainingPair> load_split(const fs::path& data_dir, Split split) {
  const fs::path manifest_path = data_dir / kManifestFile;
  if (!fs::exists(manifest_path)) {
    throw DataError("no " + std::string(kManifestFile) + " in " + data_dir.string());
  }
  const DatasetManifest manifest = read_manifest(manifest_path);
  std::vector<TrainingPair> pairs;
  for (const ManifestEntry& e : manifest.subset(split)) {
    const fs::path image = patch_image_path(data_dir, e.patch_id);
    const fs::path mask = patch_mask_path(data_dir, e.patch_id);
    if (!fs::exists(image)) throw DataError("missing target image " + image.string());
    if (!fs::exists(mask)) throw DataError("missing mask " + mask.string());
    PairedPatch p{load_mask(mask), load_raster(image), e.provenance};
    if (p.mask.width != p.image.width || p.mask.height != p.image.height) {
      throw DataError("patch " + e.patch_id + ": mask and image sizes differ");
    }
    pairs.push_back(to_training_pair(p));
  }
  return pairs;
}

std::size_t auto_generator_depth(std::size_t patch_size) {
  std::size_t depth = 0;
  while (depth < 8 && patch_size % (std::size_t{2} << depth) == 0) ++depth;
  return depth;
}

TrainConfig train_config_from(const RunConfig& config, std::size_t patch_size) {
  TrainConfig cfg;
  cfg.variant = variant_by_name(config.get("variant"));
  cfg.epochs = static_cast<std::uint32_t>(positive(config, "epochs"));
  cfg.checkpoint_interval = static_cast<std::uint32_t>(positive(config, "checkpoint_interval"));
  cfg.adam.learning_rate = config.get_double("learning_rate");
  cfg.adam.beta1 = config.get_double("adam_beta1");
  cfg.adam.beta2 = config.get_double("adam_beta2");
  cfg.batch_size = positive(config, "batch_size");
  cfg.seed = config.get_uint("seed");
  cfg.generator.base_channels = positive(config, "base_channels");
  cfg.discriminator_base_channels = positive(config, "discriminator_base_channels");
  const std::size_t depth = static_cast<std::size_t>(config.get_uint("generator_depth"));
  cfg.generator.depth = depth == 0 ? auto_generator_depth(patch_size) : depth;
  if (cfg.generator.depth == 0) {
    throw UsageError("patch size " + std::to_string(patch_size) +
                     " is odd; the generator needs an even extent");
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

TrainResult cmd_train(const RunConfig& config) {
  const fs::path data_dir = required_path(config, "data_dir");
  const fs::path out = required_path(config, "out_dir");
  variant_by_name(config.get("variant"));  // report bad names before loading data
  const std::vector<TrainingPair> pairs = load_split(data_dir, Split::train);
  if (pairs.empty()) throw DataError("training split of " + data_dir.string() + " is empty");
  const std::size_t patch = pairs.front().mask.dim(2);
  const TrainConfig cfg = train_config_from(config, patch);
  if (patch % (std::size_t{1} << cfg.generator.depth) != 0) {
    throw UsageError("patch size " + std::to_string(patch) + " is not divisible by 2^" +
                     std::to_string(cfg.generator.depth));
  }

  fs::create_directories(out);
  RunConfig resolved = config;
  resolved.set("generator_depth", std::to_string(cfg.generator.depth));
  resolved.write(out / kRunConfigFile);
  DirectoryCheckpointSink sink(out);
  LossLogWriter log(out / kLossLogFile);
  spdlog::info("train: {} pairs of {}x{}, variant {}, {} epochs, generator depth {}",
               pairs.size(), patch, patch, cfg.variant.name, cfg.epochs, cfg.generator.depth);
  return train(pairs, cfg, sink, &log);
}

namespace {

void paste(Raster& canvas, const Raster& tile, std::size_t x0, std::size_t y0) {
  for (std::size_t y = 0; y < tile.height; ++y) {
    for (std::size_t x = 0; x < tile.width; ++x) canvas.at(x0 + x, y0 + y) = tile.at(x, y);
  }
}

void write_grid(const fs::path& path, NetworkState& g, std::span<const TrainingPair> samples,
                std::uint64_t seed) {
  const std::size_t p = samples.front().mask.dim(2);
  const std::size_t q = samples.front().mask.dim(3);
  Raster canvas(3 * q, samples.size() * p);
  const ForwardOptions opts = ForwardOptions::stochastic_inference();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng = derive_rng(seed, i);
    const Tensor pred = generate(g, samples[i].mask, opts, rng);
    paste(canvas, tensor_to_image(samples[i].mask), 0, i * p);
    paste(canvas, tensor_to_image(samples[i].target), q, i * p);
    paste(canvas, tensor_to_image(pred), 2 * q, i * p);
  }
  save_raster(canvas, path, RasterEncoding::png8);
}

}  // namespace

MetricsCurve cmd_eval(const RunConfig& config) {
  const fs::path ckpt_dir = required_path(config, "checkpoint_dir");
  const fs::path data_dir = required_path(config, "data_dir");
  const fs::path out = required_path(config, "out_dir");
  const Split split = parse_split(config.get("split"));
  const std::uint64_t seed = config.get_uint("seed");
  const bool grid = config.get_bool("grid");
  const std::size_t grid_samples = positive(config, "grid_samples");

  const std::vector<TrainingPair> pairs = load_split(data_dir, split);
  if (pairs.empty()) {
    throw DataError(std::string(split_name(split)) + " split of " + data_dir.string() +
                    " is empty");
  }
  const std::vector<CheckpointEntry> entries = list_checkpoints(ckpt_dir);
  if (entries.empty()) throw DataError("no ckpt_epoch*.bin files in " + ckpt_dir.string());

  const MetricsCurve curve = metrics_curve(entries, pairs, seed);
  fs::create_directories(out);
  config.write(out / kRunConfigFile);
  write_metrics_csv(out / kMetricsFile, curve.records);
  for (const MetricsRecord& r : curve.records) {
    spdlog::info("eval: epoch {} dice {:.4f} ssim {:.4f} over {} samples", r.epoch, r.mean_dice,
                 r.mean_ssim, r.n_samples);
  }
  if (curve.records.empty()) throw DataError("no checkpoint in " + ckpt_dir.string() + " was readable");

  if (grid) {
    const std::uint32_t last = curve.records.back().epoch;
    for (const CheckpointEntry& e : entries) {
      if (e.epoch != last) continue;
      Checkpoint ck = load_checkpoint(e.path);
      const std::size_t n = std::min(grid_samples, pairs.size());
      write_grid(out / kGridFile, ck.state, std::span(pairs).first(n), seed);
    }
  }
  return curve;
}

Raster generate_tiled(NetworkState& generator, const SegmentationMask& mask, std::uint64_t seed,
                      bool stochastic) {
  const std::size_t tile =
      generator.spec.patch_size ? generator.spec.patch_size : std::size_t{1} << generator.spec.depth;
  if (mask.width % tile != 0 || mask.height % tile != 0 || mask.width == 0 || mask.height == 0) {
    throw DataError("mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                    " is not a multiple of the checkpoint's " + std::to_string(tile) +
                    "px tile size");
  }
  const ForwardOptions opts =
      stochastic ? ForwardOptions::stochastic_inference() : ForwardOptions::inference();
  Raster out(mask.width, mask.height);
  std::size_t index = 0;
  for (std::size_t y = 0; y < mask.height; y += tile) {
    for (std::size_t x = 0; x < mask.width; x += tile) {
      Rng rng = derive_rng(seed, index++);
      const Tensor pred = generate(generator, mask_to_tensor(crop(mask, x, y, tile, tile)), opts, rng);
      paste(out, tensor_to_image(pred), x, y);
    }
  }
  return out;
}

Raster cmd_generate(const RunConfig& config) {
  const fs::path ckpt_path = required_path(config, "checkpoint");
  const fs::path mask_path = required_path(config, "mask");
  const fs::path out = required_path(config, "out");
  const std::uint64_t seed = config.get_uint("seed");
  const bool stochastic = config.get_bool("stochastic");

  Checkpoint ck = load_checkpoint(ckpt_path);
  if (ck.state.spec.kind != NetworkKind::generator) {
    throw DataError(ckpt_path.string() + " does not hold a generator");
  }
  const SegmentationMask mask = load_mask(mask_path);
  const Raster image = generate_tiled(ck.state, mask, seed, stochastic);
  save_raster(image, out);
  config.write(fs::path(out.string() + ".run_config.txt"));
  spdlog::info("generate: {}x{} image from epoch {} checkpoint written to {}", image.width,
               image.height, ck.epoch, out.string());
  return image;
}

}  // namespace sargan
