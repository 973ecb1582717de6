// Command-line runner for microlaser experiments.
//
//   microlaser run <config.toml | preset> [--seed N] [--out DIR] [--threads N] [--set k=v]...
//   microlaser validate <config.toml | preset> [--set k=v]...
//   microlaser list-presets

#include "microlaser/error.hpp"
#include "microlaser/experiment.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace ml = microlaser;

namespace {

void print_presets() {
  for (const ml::Preset& p : ml::presets()) {
    std::string criteria;
    for (int c : p.criteria) criteria += (criteria.empty() ? "" : ",") + std::to_string(c);
    std::cout << p.name << "\t" << p.figure << "\tcriteria: " << (criteria.empty() ? "none" : criteria)
              << "\t" << p.description << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-mode Lambda-atom microlaser simulations"};
  app.require_subcommand(1);

  std::string source;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir = "out";

  auto* run = app.add_subcommand("run", "run an experiment and write its artifacts");
  run->add_option("config", source, "TOML file or preset name")->required();
  run->add_option("--seed", seed, "master seed for trajectory ensembles");
  run->add_option("--out", out_dir, "output directory")->capture_default_str();
  run->add_option("--threads", threads, "worker threads (0 = all cores)");
  run->add_option("--set", overrides, "override a config value, key.path=value")
      ->allow_extra_args(false);

  auto* check = app.add_subcommand("validate", "check a configuration without running it");
  check->add_option("config", source, "TOML file or preset name")->required();
  check->add_option("--set", overrides, "override a config value, key.path=value")
      ->allow_extra_args(false);

  app.add_subcommand("list-presets", "print the preset catalog");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("list-presets")) {
      print_presets();
      return 0;
    }
    if (seed) overrides.push_back("qtm.seed=" + std::to_string(*seed));
    if (threads) overrides.push_back("threads=" + std::to_string(*threads));
    const ml::ExperimentConfig config = ml::load_config_source(source, overrides);
    if (app.got_subcommand("validate")) {
      std::cout << "ok: " << ml::to_string(config.kind) << " (" << ml::method_label(config)
                << ")\n";
      return 0;
    }
    const ml::RunSummary summary = ml::run(config, out_dir);
    for (const auto& f : summary.files) std::cout << f.string() << '\n';
    return 0;
  } catch (const ml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ml::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
