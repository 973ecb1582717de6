#pragma once

#include "microlaser/correlation.hpp"
#include "microlaser/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace microlaser {

enum class ExperimentKind { SteadyDist, SweepMean, G2, TrappingScan, VelocityStudy, Semiclassical };
enum class Method { Analytic, Generator, Qtm, All };

struct SweepSpec {
  double min = 0.0;
  double max = 0.0;
  int points = 0;
  bool theta_axis = false;  ///< sweep theta = g tau sqrt(R / gamma) instead of g tau
};

struct QtmBudget {
  std::int64_t n_traj = 1000;
  double t_final = 50.0;
  std::uint64_t seed = 1;
  double burn_in = 10.0;
  bool dump_trajectories = false;
};

struct CorrelationSpec {
  double bin_width = 0.05;
  double tau_max = 10.0;
  std::vector<Target> targets{Target::Mode1};
  int per_bin = 8;  ///< regression samples per bin before bin averaging
};

struct StudySpec {
  std::vector<double> spreads;
  double offset = 0.02;  ///< relative g tau offset of the dip shoulders
};

struct ExperimentConfig {
  std::string preset;
  ExperimentKind kind = ExperimentKind::SteadyDist;
  std::vector<Method> methods{Method::All};
  ModelParams model;
  std::optional<FockGrid> grid;
  TimeSampling sampling = TimeSampling::Velocity;
  double v_min_fraction = 0.05;
  std::optional<SweepSpec> sweep;
  QtmBudget qtm;
  CorrelationSpec correlation;
  StudySpec study;
  double s_max = 100.0;  ///< semiclassical scan range
  unsigned threads = 1;
  nlohmann::json resolved;  ///< the merged configuration as read
};

std::string_view to_string(ExperimentKind kind);
std::string_view to_string(Method method);
std::string_view to_string(Target target);

/// True when `method` is listed or `all` is.
bool uses(const ExperimentConfig& config, Method method);
/// Method names joined with '+'.
std::string method_label(const ExperimentConfig& config);

struct Preset {
  std::string name;
  std::string figure;       ///< figure of the source study it regenerates
  std::string description;
  std::vector<int> criteria;  ///< acceptance criteria the preset feeds
  nlohmann::json config;
};

const std::vector<Preset>& presets();

/// Exact name, or a unique name prefix ending at a '-' (e.g. "fig15").
const Preset& find_preset(std::string_view name);

/// Applies `key.path=value`; the value is read as TOML and taken as a plain
/// string when it is not valid TOML.
void apply_override(nlohmann::json& config, std::string_view assignment);

/// Merges the named preset (if any) under `raw`, then validates.
ExperimentConfig load_config(const nlohmann::json& raw);

/// Reads a TOML file, or a preset when `source` names one and no such file
/// exists, then applies overrides in order.
ExperimentConfig load_config_source(const std::string& source,
                                    const std::vector<std::string>& overrides = {});

struct RunSummary {
  std::vector<std::filesystem::path> files;
  double wall_seconds = 0.0;
};

/// Runs the experiment and writes result.csv, manifest.json and any extra
/// artifacts into out_dir (created if needed).
RunSummary run(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Version string recorded in manifests.
std::string_view code_version();

}  // namespace microlaser
