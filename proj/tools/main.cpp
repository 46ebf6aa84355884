#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frictionml/error.hpp"
#include "frictionml/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailedCell = 1;
constexpr int kExitConfig = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Road friction classification: synthesize, embed, experiment, sweep"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "Print every config key with its default and exit");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const frictionml::RunConfig&, const std::filesystem::path&);
  };
  const std::vector<Command> commands{
      {"synth", "Write a synthetic measurement CSV and generator manifest", frictionml::cmd_synth},
      {"embed", "Write PCA 2-D, SNE and correlation CSVs per segment", frictionml::cmd_embed},
      {"experiment", "Cross-validate LR/SVM/ANN over all horizons and write result tables", frictionml::cmd_experiment},
      {"sweep", "Cross-validate one classifier over the values of one config key", frictionml::cmd_sweep},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "key=value config file (a manifest.txt works)");
    sub->add_option("--set", overrides, "key=value override, repeatable")->take_all();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    subs.push_back(sub);
  }

  // --list-keys works without a subcommand
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--list-keys") {
      frictionml::describe_config(std::cout);
      return kExitOk;
    }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  frictionml::RunConfig config;
  try {
    if (!config_path.empty()) config = frictionml::load_config(config_path);
    for (const auto& o : overrides) frictionml::apply_override(config, o);
  } catch (const frictionml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      const int failed = commands[i].run(config, out_dir);
      if (failed > 0) {
        std::cerr << failed << " cell(s) failed; see the tables in " << out_dir << '\n';
        return kExitFailedCell;
      }
      return kExitOk;
    } catch (const frictionml::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << commands[i].name << ": " << e.what() << '\n';
      return kExitFailedCell;
    }
  }
  return kExitOk;
}
