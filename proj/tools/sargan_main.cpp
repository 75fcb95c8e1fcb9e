#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <iostream>
#include <list>
#include <map>

#include "sargan/commands.hpp"
#include "sargan/errors.hpp"

namespace {

struct Command {
  std::string name;
  std::string help;
  std::vector<sargan::ConfigKey> keys;
  std::function<void(const sargan::RunConfig&)> run;
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> options;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

int fail(int code, const std::string& what) {
  std::cerr << "error: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sargan;

  CLI::App app{"Conditional GAN synthesis of SAR glacier images from segmentation masks"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::list<Command> commands;
  auto add = [&](std::string name, std::string help, std::vector<ConfigKey> keys,
                 std::function<void(const RunConfig&)> run) {
    Command& c = commands.emplace_back();
    c.name = std::move(name);
    c.help = std::move(help);
    c.keys = std::move(keys);
    c.run = std::move(run);
  };
  add("synth-data", "Synthesize SAR-like scenes, patches and a split manifest", synth_data_keys(),
      [](const RunConfig& c) { cmd_synth_data(c); });
  add("train", "Train generator and discriminator on the training split", train_keys(),
      [](const RunConfig& c) { cmd_train(c); });
  add("eval", "Score every checkpoint with dice and SSIM", eval_keys(),
      [](const RunConfig& c) { cmd_eval(c); });
  add("generate", "Synthesize an image for a mask from a checkpoint", generate_keys(),
      [](const RunConfig& c) { cmd_generate(c); });

  for (Command& cmd : commands) {
    cmd.app = app.add_subcommand(cmd.name, cmd.help);
    cmd.app->fallthrough();
    cmd.app->add_option("--config", cmd.config_path, "key=value file; flags override it")
        ->check(CLI::ExistingFile);
    for (const ConfigKey& key : cmd.keys) {
      std::string help = key.help;
      if (!key.default_value.empty()) help += " [" + key.default_value + "]";
      cmd.options[key.name] = cmd.app->add_option("--" + dashed(key.name), cmd.flags[key.name], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  auto logger = spdlog::stderr_color_mt("sargan");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  for (Command& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      RunConfig config(cmd.keys);
      if (!cmd.config_path.empty()) config.merge_file(cmd.config_path);
      for (const auto& [key, option] : cmd.options) {
        if (option->count() > 0) config.set(key, cmd.flags[key]);
      }
      cmd.run(config);
      return 0;
    } catch (const UsageError& e) {
      return fail(1, e.what());
    } catch (const DataError& e) {
      return fail(2, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      return fail(2, e.what());
    } catch (const NumericError& e) {
      return fail(3, e.what());
    } catch (const std::exception& e) {
      return fail(3, e.what());
    }
  }
  return 1;
}
