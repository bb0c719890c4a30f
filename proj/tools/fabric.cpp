#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "fabric/pipeline.hpp"

namespace {

constexpr int kInputError = 2;
constexpr int kNumericError = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-topology and delay-robust control experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  const std::vector<std::pair<std::string, std::string>> modes{
      {"run", "integrated loop over a scene sequence"},
      {"ph-decay", "PH distance decay of a stochastic semantic solve"},
      {"delay-sweep", "phase margin per method and delay"},
      {"surgery", "neck surgery on the dumbbell fixture"},
      {"bound", "integrated loop plus the unified stability bound"},
  };
  for (const auto& [name, help] : modes) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "seed (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    const std::string mode_name = app.get_subcommands().front()->get_name();
    const fabric::Mode mode = fabric::parse_mode(mode_name);
    std::string text, base_dir;
    if (!config_path.empty()) {
      text = fabric::read_text_file(config_path);
      base_dir = std::filesystem::path(config_path).parent_path().string();
    }
    fabric::ExperimentConfig cfg = fabric::parse_experiment_config(text, mode, base_dir);
    cfg.output_dir = out_dir;
    if (seed) cfg.seed = *seed;
    for (const std::string& path : fabric::run_experiment(cfg)) std::cout << path << '\n';
    return 0;
  } catch (const fabric::InputError& e) {
    fabric::log(fabric::LogLevel::Error, e.what());
    return kInputError;
  } catch (const fabric::InvalidArgument& e) {
    fabric::log(fabric::LogLevel::Error, e.what());
    return kInputError;
  } catch (const std::exception& e) {
    fabric::log(fabric::LogLevel::Error, e.what());
    return kNumericError;
  }
}
