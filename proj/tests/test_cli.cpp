#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "sargan/checkpoint.hpp"
#include "sargan/commands.hpp"
#include "sargan/errors.hpp"
#include "sargan/raster_io.hpp"

using namespace sargan;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sargan_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> file bytes for every regular file below `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

RunConfig synth_config(const fs::path& out, std::size_t n, std::size_t extent, std::size_t patch,
                       std::uint64_t seed = 0) {
  RunConfig c(synth_data_keys());
  c.set("out_dir", out.string());
  c.set("n_scenes", std::to_string(n));
  c.set("width", std::to_string(extent));
  c.set("height", std::to_string(extent));
  c.set("patch_size", std::to_string(patch));
  c.set("seed", std::to_string(seed));
  return c;
}

RunConfig small_train_config(const fs::path& data, const fs::path& out, std::uint32_t epochs,
                             std::uint32_t interval) {
  RunConfig c(train_keys());
  c.set("data_dir", data.string());
  c.set("out_dir", out.string());
  c.set("epochs", std::to_string(epochs));
  c.set("checkpoint_interval", std::to_string(interval));
  c.set("base_channels", "2");
  c.set("discriminator_base_channels", "2");
  return c;
}

// Untrained generator checkpoint with the given native tile size.
fs::path write_generator(const fs::path& dir, std::size_t patch) {
  TrainConfig cfg;
  cfg.generator.base_channels = 2;
  cfg.generator.depth = auto_generator_depth(patch);
  cfg.discriminator_base_channels = 2;
  const GanModels models = initialize_models(cfg, patch);
  const fs::path path = dir / checkpoint_filename(0);
  save_checkpoint(path, models.generator, 0);
  return path;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(SARGAN_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(SynthData, EightScenesYieldThirtyTwoPatchesSplitTwentyEightFour) {
  const fs::path out = scratch_dir("synth8");
  const SynthDataSummary s = cmd_synth_data(synth_config(out, 8, 512, 256));
  EXPECT_EQ(s.scenes, 8u);
  EXPECT_EQ(s.patches, 32u);
  EXPECT_EQ(s.train, 28u);
  EXPECT_EQ(s.validation, 4u);
  EXPECT_EQ(load_split(out, Split::train).size(), 28u);
  EXPECT_EQ(load_split(out, Split::validation).size(), 4u);
  EXPECT_TRUE(fs::exists(out / kRunConfigFile));
}

TEST(SynthData, ZeroScenesIsAnEmptyDatasetError) {
  const fs::path out = scratch_dir("synth0");
  try {
    cmd_synth_data(synth_config(out, 0, 512, 256));
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("empty dataset"), std::string::npos);
  }
}

TEST(SynthData, RerunWithSameSeedGivesIdenticalTree) {
  const fs::path a = scratch_dir("synth_a");
  const fs::path b = scratch_dir("synth_b");
  cmd_synth_data(synth_config(a, 3, 128, 64, 11));
  cmd_synth_data(synth_config(b, 3, 128, 64, 11));
  auto ta = tree(a);
  auto tb = tree(b);
  // The recorded out_dir differs by construction.
  ta.erase(kRunConfigFile);
  tb.erase(kRunConfigFile);
  EXPECT_EQ(ta.size(), 3u * 2 + 3u * 4 * 2 + 1);
  EXPECT_TRUE(ta == tb);

  const fs::path c = scratch_dir("synth_c");
  cmd_synth_data(synth_config(c, 3, 128, 64, 12));
  auto tc = tree(c);
  tc.erase(kRunConfigFile);
  EXPECT_FALSE(ta == tc);
}

TEST(SynthData, MissingFileIsDataError) {
  const fs::path out = scratch_dir("synth_missing");
  cmd_synth_data(synth_config(out, 2, 64, 32));
  const auto val = load_split(out, Split::validation);
  ASSERT_FALSE(val.empty());
  std::ifstream in(out / kManifestFile);
  std::string line, victim;
  while (std::getline(in, line)) {
    if (line.find(",validation") != std::string::npos) victim = line.substr(0, line.find(','));
  }
  ASSERT_FALSE(victim.empty());
  fs::remove(patch_image_path(out, victim));
  EXPECT_THROW(load_split(out, Split::validation), DataError);
  EXPECT_THROW(load_split(scratch_dir("empty"), Split::train), DataError);
}

TEST(Train, VariantWeightsReachTheTrainConfig) {
  RunConfig c(train_keys());
  c.set("variant", "orig");
  TrainConfig orig = train_config_from(c, 256);
  EXPECT_EQ(orig.variant.lambda_gan, 1.0);
  EXPECT_EQ(orig.variant.lambda_l1, 100.0);
  EXPECT_EQ(orig.generator.depth, 8u);
  c.set("variant", "l11gan100");
  TrainConfig l11 = train_config_from(c, 256);
  EXPECT_EQ(l11.variant.lambda_gan, 100.0);
  EXPECT_EQ(l11.variant.lambda_l1, 1.0);
  c.set("variant", "bogus");
  try {
    train_config_from(c, 256);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    for (const char* name : {"orig", "gen5", "dis3", "l11gan100", "l150gan50"}) {
      EXPECT_NE(msg.find(name), std::string::npos) << name;
    }
  }
}

TEST(Train, AutoDepthIsLargestPowerDividingThePatch) {
  EXPECT_EQ(auto_generator_depth(256), 8u);
  EXPECT_EQ(auto_generator_depth(64), 6u);
  EXPECT_EQ(auto_generator_depth(32), 5u);
  EXPECT_EQ(auto_generator_depth(1024), 8u);
  EXPECT_EQ(auto_generator_depth(48), 4u);
}

class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch_dir("trained");
    cmd_synth_data(synth_config(root_ / "data", 2, 64, 32));
    result_ = new TrainResult(cmd_train(small_train_config(root_ / "data", root_ / "train", 30, 15)));
  }
  static void TearDownTestSuite() {
    delete result_;
    result_ = nullptr;
  }
  static inline fs::path root_;
  static inline TrainResult* result_ = nullptr;
};

TEST_F(TrainedRun, ThirtyEpochsAtIntervalFifteenCheckpointTwice) {
  EXPECT_EQ(result_->checkpoint_epochs, (std::vector<std::uint32_t>{15, 30}));
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root_ / "train")) {
    if (e.path().extension() == ".bin") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"ckpt_epoch15.bin", "ckpt_epoch30.bin"}));
  EXPECT_EQ(read_loss_log(root_ / "train" / kLossLogFile).size(), 30u);
}

TEST_F(TrainedRun, RunConfigRecordsResolvedDepth) {
  RunConfig written(train_keys());
  written.merge_file(root_ / "train" / kRunConfigFile);
  EXPECT_EQ(written.get_uint("generator_depth"), 5u);
  EXPECT_EQ(written.get_uint("epochs"), 30u);
}

TEST_F(TrainedRun, EvalWritesOneRowPerCheckpoint) {
  RunConfig c(eval_keys());
  c.set("checkpoint_dir", (root_ / "train").string());
  c.set("data_dir", (root_ / "data").string());
  c.set("out_dir", (root_ / "eval").string());
  const MetricsCurve curve = cmd_eval(c);
  ASSERT_EQ(curve.records.size(), 2u);

  std::ifstream in(root_ / "eval" / kMetricsFile);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 3u);

  const auto reread = read_metrics_csv(root_ / "eval" / kMetricsFile);
  ASSERT_EQ(reread.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(reread[i].epoch, curve.records[i].epoch);
    EXPECT_NEAR(reread[i].mean_dice, curve.records[i].mean_dice, 1e-9);
    EXPECT_NEAR(reread[i].mean_ssim, curve.records[i].mean_ssim, 1e-9);
    EXPECT_EQ(reread[i].n_samples, curve.records[i].n_samples);
  }
  const Raster grid = load_raster(root_ / "eval" / kGridFile);
  EXPECT_EQ(grid.width, 3u * 32);
  EXPECT_EQ(grid.height, 32u * std::min<std::size_t>(4, curve.records[0].n_samples));
}

TEST_F(TrainedRun, EvalWithMissingValidationTargetAborts) {
  const fs::path data = root_ / "data_broken";
  fs::remove_all(data);
  fs::copy(root_ / "data", data, fs::copy_options::recursive);
  std::ifstream in(data / kManifestFile);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find(",validation") != std::string::npos) {
      fs::remove(patch_image_path(data, line.substr(0, line.find(','))));
    }
  }
  RunConfig c(eval_keys());
  c.set("checkpoint_dir", (root_ / "train").string());
  c.set("data_dir", data.string());
  c.set("out_dir", (root_ / "eval_broken").string());
  EXPECT_THROW(cmd_eval(c), DataError);
}

TEST(Eval, EmptyCheckpointDirIsDataError) {
  const fs::path root = scratch_dir("eval_empty");
  cmd_synth_data(synth_config(root / "data", 1, 64, 32));
  fs::create_directories(root / "ckpt");
  RunConfig c(eval_keys());
  c.set("checkpoint_dir", (root / "ckpt").string());
  c.set("data_dir", (root / "data").string());
  c.set("out_dir", (root / "eval").string());
  EXPECT_THROW(cmd_eval(c), DataError);
}

class Generate : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch_dir("generate");
    checkpoint_ = write_generator(dir_, 256);
  }
  RunConfig config(const fs::path& mask, const fs::path& out, std::uint64_t seed = 3) {
    RunConfig c(generate_keys());
    c.set("checkpoint", checkpoint_.string());
    c.set("mask", mask.string());
    c.set("out", out.string());
    c.set("seed", std::to_string(seed));
    return c;
  }
  static inline fs::path dir_;
  static inline fs::path checkpoint_;
};

TEST_F(Generate, AllOceanMaskGivesOneImageInUnitRange) {
  save_mask(SegmentationMask(256, 256), dir_ / "ocean.png");
  const Raster img = cmd_generate(config(dir_ / "ocean.png", dir_ / "ocean_out.sras"));
  EXPECT_EQ(img.width, 256u);
  EXPECT_EQ(img.height, 256u);
  for (double v : img.pixels) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  const Raster reread = load_raster(dir_ / "ocean_out.sras");
  EXPECT_EQ(reread.width, 256u);
  EXPECT_TRUE(fs::exists(dir_ / "ocean_out.sras.run_config.txt"));
}

TEST_F(Generate, LargeMaskIsProcessedAsFourTiles) {
  SegmentationMask mask(512, 512);
  for (std::size_t y = 0; y < 512; ++y) {
    for (std::size_t x = 0; x < 512; ++x) mask.at(x, y) = x + y < 500 ? 1 : 0;
  }
  Checkpoint ck = load_checkpoint(checkpoint_);
  const Raster whole = generate_tiled(ck.state, mask, 5, true);
  ASSERT_EQ(whole.width, 512u);
  std::size_t t = 0;
  for (std::size_t ty = 0; ty < 2; ++ty) {
    for (std::size_t tx = 0; tx < 2; ++tx, ++t) {
      Rng rng = derive_rng(5, t);
      const Tensor pred = generate(ck.state, mask_to_tensor(crop(mask, tx * 256, ty * 256, 256, 256)),
                                   ForwardOptions::stochastic_inference(), rng);
      EXPECT_EQ(tensor_to_image(pred), crop(whole, tx * 256, ty * 256, 256, 256)) << "tile " << t;
    }
  }
  SegmentationMask odd(300, 256);
  EXPECT_THROW(generate_tiled(ck.state, odd, 5, true), DataError);
}

TEST_F(Generate, SameSeedTwiceGivesIdenticalFiles) {
  SegmentationMask mask(256, 256);
  for (std::size_t y = 0; y < 256; ++y) {
    for (std::size_t x = 0; x < 128; ++x) mask.at(x, y) = 1;
  }
  save_mask(mask, dir_ / "half.png");
  const Raster a = cmd_generate(config(dir_ / "half.png", dir_ / "a.png"));
  const Raster b = cmd_generate(config(dir_ / "half.png", dir_ / "b.png"));
  const Raster c = cmd_generate(config(dir_ / "half.png", dir_ / "c.png", 4));
  EXPECT_TRUE(slurp(dir_ / "a.png") == slurp(dir_ / "b.png"));
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST_F(Generate, NonBinaryMaskListsOffendingValues) {
  Raster gray(256, 256, 0.0);
  gray.at(3, 3) = 0.5;
  save_raster(gray, dir_ / "gray.png", RasterEncoding::png8);
  try {
    cmd_generate(config(dir_ / "gray.png", dir_ / "never.png"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("128"), std::string::npos) << e.what();
  }
  EXPECT_FALSE(fs::exists(dir_ / "never.png"));
}

TEST(RunConfigFile, FlagsOverrideFileAndUnknownKeysAreRejected) {
  RunConfig c(train_keys());
  c.merge_text("# comment\nepochs = 12\nvariant=gen5  # trailing\n", "cfg");
  EXPECT_EQ(c.get_uint("epochs"), 12u);
  EXPECT_EQ(c.get("variant"), "gen5");
  c.set("epochs", "7");
  EXPECT_EQ(c.get_uint("epochs"), 7u);
  try {
    c.merge_text("epochs=1\nlearning_rte=3\n", "cfg");
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
  }
  RunConfig round(train_keys());
  round.merge_text(c.to_text(), "text");
  EXPECT_EQ(round.to_text(), c.to_text());
}

TEST(RunConfigFile, DefaultPathsFollowOutputRootVariable) {
  ::setenv("SARGAN_OUTPUT_ROOT", "/tmp/somewhere", 1);
  RunConfig c(train_keys());
  EXPECT_EQ(fs::path(c.get("out_dir")), fs::path("/tmp/somewhere") / "train");
  ::unsetenv("SARGAN_OUTPUT_ROOT");
  RunConfig d(train_keys());
  EXPECT_EQ(fs::path(d.get("out_dir")), fs::path("runs") / "train");
}

TEST(ExitCodes, FollowTheScriptingContract) {
  const fs::path root = scratch_dir("exit");
  const std::string data = (root / "data").string();
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary(""), 1);
  EXPECT_EQ(run_binary("synth-data --no-such-flag 1"), 1);
  EXPECT_EQ(run_binary("synth-data --n-scenes 0 --out-dir " + data), 1);
  EXPECT_EQ(run_binary("synth-data --n-scenes 1 --width 64 --height 64 --patch-size 32 --out-dir " +
                       data),
            0);
  EXPECT_EQ(run_binary("train --variant nope --data-dir " + data), 1);

  std::ofstream(root / "bad.cfg") << "not_a_key=1\n";
  EXPECT_EQ(run_binary("train --config " + (root / "bad.cfg").string()), 1);

  EXPECT_EQ(run_binary("eval --data-dir " + data + " --checkpoint-dir " +
                       (root / "missing").string() + " --out-dir " + (root / "eval").string()),
            2);
  EXPECT_EQ(run_binary("train --data-dir " + (root / "nodata").string() + " --out-dir " +
                       (root / "t").string()),
            2);

  std::ofstream(root / "blowup.cfg") << "epochs=2\ncheckpoint_interval=2\nbase_channels=2\n"
                                        "discriminator_base_channels=2\nlearning_rate=1e300\n";
  EXPECT_EQ(run_binary("train --config " + (root / "blowup.cfg").string() + " --data-dir " + data +
                       " --out-dir " + (root / "blowup").string()),
            3);

  const std::string train = (root / "train").string();
  EXPECT_EQ(run_binary("train --epochs 1 --checkpoint-interval 1 --base-channels 2 "
                       "--discriminator-base-channels 2 --data-dir " + data + " --out-dir " + train +
                       " --log-level warn"),
            0);
  const std::string mask = (root / "mask.png").string();
  save_mask(SegmentationMask(32, 32, MaskClass::glacier_and_rock), mask);
  EXPECT_EQ(run_binary("generate --checkpoint " + train + "/ckpt_epoch1.bin --mask " + mask +
                       " --out " + (root / "gen.png").string()),
            0);
  EXPECT_TRUE(fs::exists(root / "gen.png"));
}
