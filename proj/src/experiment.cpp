#include "microlaser/experiment.hpp"

#include "microlaser/analytic.hpp"
#include "microlaser/csv.hpp"
#include "microlaser/error.hpp"
#include "microlaser/generator.hpp"
#include "microlaser/qtm.hpp"
#include "microlaser/toml_subset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#ifndef MICROLASER_VERSION
#define MICROLASER_VERSION "unknown"
#endif

namespace microlaser {

using nlohmann::json;

std::string_view code_version() { return MICROLASER_VERSION; }

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::SteadyDist: return "steady-dist";
    case ExperimentKind::SweepMean: return "sweep-mean";
    case ExperimentKind::G2: return "g2";
    case ExperimentKind::TrappingScan: return "trapping-scan";
    case ExperimentKind::VelocityStudy: return "velocity-study";
    case ExperimentKind::Semiclassical: return "semiclassical";
  }
  return "unknown";
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Analytic: return "analytic";
    case Method::Generator: return "generator";
    case Method::Qtm: return "qtm";
    case Method::All: return "all";
  }
  return "unknown";
}

std::string_view to_string(Target target) {
  switch (target) {
    case Target::Mode1: return "mode1";
    case Target::Mode2: return "mode2";
    case Target::Total: return "total";
  }
  return "unknown";
}

bool uses(const ExperimentConfig& config, Method method) {
  const auto& m = config.methods;
  return std::find(m.begin(), m.end(), Method::All) != m.end() ||
         std::find(m.begin(), m.end(), method) != m.end();
}

/// Listed explicitly (not through `all`).
static bool named(const ExperimentConfig& c, Method m) {
  return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end();
}

std::string method_label(const ExperimentConfig& config) {
  std::string out;
  for (Method m : config.methods) out += (out.empty() ? "" : "+") + std::string(to_string(m));
  return out;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

const double kPi = std::numbers::pi;

json two_mode(double nb, double R, double gtau, double spread = 0.0) {
  return {{"g", 1.0}, {"gamma", 1.0}, {"nb", nb}, {"R", R}, {"gtau", gtau}, {"spread", spread}};
}

std::vector<Preset> make_presets() {
  const double pi_over_root3 = kPi / std::sqrt(3.0);
  const double pi_over_root2 = kPi / std::sqrt(2.0);
  std::vector<Preset> out;
  out.push_back({"fig3-flat-regions", "figure 3",
                 "joint distribution with flat regions, nb = 0.1, R = 50, g tau = 1",
                 {1, 3},
                 {{"kind", "steady-dist"},
                  {"method", {"analytic", "generator"}},
                  {"model", two_mode(0.1, 50.0, 1.0)}}});
  out.push_back({"fig4-semiclassical", "figure 4",
                 "semiclassical gain and loss balance, g tau = 1, R = 50",
                 {},
                 {{"kind", "semiclassical"}, {"model", two_mode(0.0, 50.0, 1.0)},
                  {"semiclassical", {{"s_max", 120.0}}}}});
  out.push_back({"fig5-g2zero-two-mode", "figure 5",
                 "g2(0) and normalized mean versus theta, two modes",
                 {},
                 {{"kind", "sweep-mean"},
                  {"method", "analytic"},
                  {"model", two_mode(0.1, 50.0, 1.0)},
                  {"sweep", {{"axis", "theta"}, {"min", 0.1}, {"max", 20.0}, {"points", 400}}}}});
  out.push_back({"fig6-g2zero-single-mode", "figure 6",
                 "g2(0) and normalized mean versus theta, single mode",
                 {},
                 {{"kind", "sweep-mean"},
                  {"method", "analytic"},
                  {"model", {{"modes", 1}, {"g", 1.0}, {"gamma", 1.0}, {"nb", 0.1}, {"R", 50.0},
                             {"gtau", 1.0}}},
                  {"sweep", {{"axis", "theta"}, {"min", 0.1}, {"max", 20.0}, {"points", 400}}}}});
  out.push_back({"fig7-trapping-g2", "figure 7",
                 "g2(tau) at the one-photon trapping state, R = 10, nb = 0",
                 {4, 6},
                 {{"kind", "g2"},
                  {"method", "all"},
                  {"model", two_mode(0.0, 10.0, pi_over_root3)},
                  {"qtm", {{"n_traj", 10000}, {"t_final", 70.0}, {"burn_in", 10.0}}},
                  {"correlation", {{"targets", {"mode1", "total"}}}}}});
  out.push_back({"fig8-trapping-formula", "figure 8",
                 "two-mode one-photon trapping g2(tau) against 1 - exp(-eta tau)",
                 {},
                 {{"kind", "g2"},
                  {"method", "all"},
                  {"model", two_mode(0.0, 10.0, pi_over_root3)},
                  {"qtm", {{"n_traj", 10000}, {"t_final", 70.0}, {"burn_in", 10.0}}}}});
  out.push_back({"single-mode-trapping", "closed form",
                 "single-mode one-photon trapping, exact 1 - exp(-eta tau)",
                 {5},
                 {{"kind", "g2"},
                  {"method", "all"},
                  {"model", {{"modes", 1}, {"g", 1.0}, {"gamma", 1.0}, {"nb", 0.0}, {"R", 10.0},
                             {"gtau", pi_over_root2}}},
                  {"qtm", {{"n_traj", 10000}, {"t_final", 70.0}, {"burn_in", 10.0}}}}});
  out.push_back({"fig9-bunching", "figure 9", "g2(tau) at g tau = 0.12 (set model.gtau=0.5 for b)",
                 {6},
                 {{"kind", "g2"},
                  {"method", "all"},
                  {"model", two_mode(0.0, 10.0, 0.12)},
                  {"qtm", {{"n_traj", 10000}, {"t_final", 70.0}, {"burn_in", 10.0}}}}});
  out.push_back({"fig10-qtm-distribution", "figure 10",
                 "trajectory histogram against the exact distribution, R = 200, g tau = 0.3",
                 {2},
                 {{"kind", "steady-dist"},
                  {"method", "all"},
                  {"model", two_mode(0.0, 200.0, 0.3)},
                  {"qtm", {{"n_traj", 10000}, {"t_final", 50.0}, {"burn_in", 10.0}}}}});
  out.push_back({"fig11-mean-sweep", "figure 11",
                 "mode-1 mean versus g tau in [0.05, 3.5], R = 50",
                 {},
                 {{"kind", "sweep-mean"},
                  {"method", "analytic"},
                  {"model", two_mode(0.1, 50.0, 1.0)},
                  {"sweep", {{"min", 0.05}, {"max", 3.5}, {"points", 346}}}}});
  out.push_back({"fig11-nonsymmetric", "figure 11",
                 "distribution without detailed balance, g1 = 0.8, g2 = 0.5",
                 {},
                 {{"kind", "steady-dist"},
                  {"method", "all"},
                  {"model", {{"g1", 0.8}, {"g2", 0.5}, {"gamma", 1.0}, {"nb", 0.1}, {"R", 50.0},
                             {"tau_int", 1.0}}},
                  {"qtm", {{"n_traj", 2000}, {"t_final", 60.0}, {"burn_in", 10.0}}}}});
  out.push_back({"fig12-nonsymmetric-near", "figure 12",
                 "distribution without detailed balance, g1 = 0.8, g2 = 0.79",
                 {},
                 {{"kind", "steady-dist"},
                  {"method", "all"},
                  {"model", {{"g1", 0.8}, {"g2", 0.79}, {"gamma", 1.0}, {"nb", 0.1}, {"R", 50.0},
                             {"tau_int", 1.0}}},
                  {"qtm", {{"n_traj", 2000}, {"t_final", 60.0}, {"burn_in", 10.0}}}}});
  out.push_back({"fig13-bunching", "figure 13", "g2(tau) at g tau = 3 (set model.gtau=2 or 1)",
                 {6},
                 {{"kind", "g2"},
                  {"method", "all"},
                  {"model", two_mode(0.0, 10.0, 3.0)},
                  {"qtm", {{"n_traj", 10000}, {"t_final", 70.0}, {"burn_in", 10.0}}}}});
  out.push_back({"fig14-velocity-distribution", "figure 14",
                 "distribution with a 20% velocity spread against the mono-velocity one",
                 {7},
                 {{"kind", "steady-dist"},
                  {"method", "all"},
                  {"model", two_mode(0.1, 50.0, 0.8, 0.2)},
                  {"qtm", {{"n_traj", 2000}, {"t_final", 60.0}, {"burn_in", 10.0}}}}});
  out.push_back({"fig15-vacuum-dip", "figure 15",
                 "vacuum-trapping dip depth versus velocity spread",
                 {7},
                 {{"kind", "velocity-study"},
                  {"method", "generator"},
                  {"model", two_mode(0.0, 50.0, pi_over_root2)},
                  {"study", {{"spreads", {2e-5, 2e-4, 1e-3, 2e-3, 1e-2, 2e-2}}, {"offset", 0.02}}}}});
  out.push_back({"fig16-mean-spread-60", "figure 16",
                 "mean versus g tau with a 60% velocity spread",
                 {},
                 {{"kind", "sweep-mean"},
                  {"method", "generator"},
                  {"model", two_mode(0.1, 50.0, 1.0, 0.6)},
                  {"sweep", {{"min", 0.05}, {"max", 3.5}, {"points", 70}}}}});
  out.push_back({"fig20-noise-induced-bunching", "figure 20",
                 "one-photon trapping g2(0) for spreads 0.01% to 0.2%",
                 {7, 8},
                 {{"kind", "velocity-study"},
                  {"method", "all"},
                  {"model", two_mode(0.0, 10.0, pi_over_root3)},
                  {"qtm", {{"n_traj", 2000}, {"t_final", 60.0}, {"burn_in", 10.0}}},
                  {"study", {{"spreads", {1e-4, 3e-4, 5e-4, 7e-4, 1e-3, 1.5e-3, 2e-3}}}}}});
  out.push_back({"fig21-bunching-decline", "figure 21",
                 "one-photon trapping g2(0) for spreads 0.2% to 20%",
                 {7},
                 {{"kind", "velocity-study"},
                  {"method", "generator"},
                  {"model", two_mode(0.0, 10.0, pi_over_root3)},
                  {"study", {{"spreads", {2e-3, 6e-3, 1e-2, 2e-2, 0.2}}}}}});
  out.push_back({"fig21-total-g2-spread", "figure 21",
                 "total-photon g2(tau) at one-photon trapping with a 0.04% spread",
                 {},
                 {{"kind", "g2"},
                  {"method", "all"},
                  {"model", two_mode(0.0, 10.0, pi_over_root3, 4e-4)},
                  {"qtm", {{"n_traj", 10000}, {"t_final", 70.0}, {"burn_in", 10.0}}},
                  {"correlation", {{"targets", {"total", "mode1"}}}}}});
  out.push_back({"trapping-scan", "figures 5 and 11",
                 "trapping resonances of the total photon number, R = 10, nb = 0",
                 {4},
                 {{"kind", "trapping-scan"},
                  {"method", "analytic"},
                  {"model", two_mode(0.0, 10.0, 1.0)},
                  {"sweep", {{"min", 0.05}, {"max", 6.0}, {"points", 1191}}}}});
  return out;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = make_presets();
  return table;
}

const Preset& find_preset(std::string_view name) {
  const Preset* match = nullptr;
  for (const Preset& p : presets()) {
    if (p.name == name) return p;
    const bool prefix = p.name.size() > name.size() && p.name.compare(0, name.size(), name) == 0 &&
                        p.name[name.size()] == '-';
    if (prefix) {
      if (match) throw ConfigError("ambiguous preset '" + std::string(name) + "'");
      match = &p;
    }
  }
  if (!match) throw ConfigError("unknown preset '" + std::string(name) + "'");
  return *match;
}

// ---------------------------------------------------------------------------
// Configuration

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = parse_toml_value(text);
  } catch (const ConfigError&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty part");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& next = (*node)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override key '" + key + "' crosses a value");
    node = &next;
    start = dot + 1;
  }
}

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be a table");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) {
      throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }
}

double number(const json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("'" + where + "." + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError("'" + where + "." + key + "' must be finite");
  return d;
}

std::int64_t integer(const json& obj, const char* key, std::int64_t fallback,
                     const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError("'" + where + "." + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string text(const json& obj, const char* key, const std::string& fallback,
                 const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("'" + where + "." + key + "' must be a string");
  return v.get<std::string>();
}

ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::SteadyDist, ExperimentKind::SweepMean, ExperimentKind::G2,
                 ExperimentKind::TrappingScan, ExperimentKind::VelocityStudy,
                 ExperimentKind::Semiclassical}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::Analytic, Method::Generator, Method::Qtm, Method::All}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "'");
}

Target parse_target(const std::string& s) {
  for (auto t : {Target::Mode1, Target::Mode2, Target::Total}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown correlation target '" + s + "'");
}

ModelParams parse_model(const json& m) {
  check_keys(m, "model",
             {"modes", "g", "gamma", "nb", "g1", "g2", "gamma1", "gamma2", "nb1", "nb2", "R",
              "tau_int", "gtau", "spread"});
  const std::int64_t modes = integer(m, "modes", 2, "model");
  if (modes != 1 && modes != 2) throw ConfigError("'model.modes' must be 1 or 2");
  auto pick = [&](const char* shared, const char* own, double fallback) {
    if (m.contains(shared) && m.contains(own)) {
      throw ConfigError(std::string("give either model.") + shared + " or model." + own);
    }
    return number(m, own, number(m, shared, fallback, "model"), "model");
  };
  ModelParams p;
  p.g1 = pick("g", "g1", 1.0);
  p.gamma1 = pick("gamma", "gamma1", 1.0);
  p.nb1 = pick("nb", "nb1", 0.0);
  p.gamma2 = pick("gamma", "gamma2", 1.0);
  if (modes == 1) {
    if (m.contains("g2") || m.contains("nb2")) {
      throw ConfigError("a single-mode model takes no g2 or nb2");
    }
    p.g2 = 0.0;
    p.nb2 = 0.0;
  } else {
    p.g2 = pick("g", "g2", 1.0);
    p.nb2 = pick("nb", "nb2", 0.0);
  }
  p.R = number(m, "R", 1.0, "model");
  p.spread = number(m, "spread", 0.0, "model");
  if (m.contains("gtau") && m.contains("tau_int")) {
    throw ConfigError("give either model.gtau or model.tau_int");
  }
  if (m.contains("gtau")) {
    if (!(p.g1 > 0.0)) throw ConfigError("model.gtau needs g1 > 0");
    p.tau_int = number(m, "gtau", 1.0, "model") / p.g1;
  } else {
    p.tau_int = number(m, "tau_int", 1.0, "model");
  }
  return validate(p);
}

json merged_with_preset(const json& raw) {
  if (!raw.is_object()) throw ConfigError("configuration must be a table");
  if (!raw.contains("preset")) return raw;
  if (!raw.at("preset").is_string()) throw ConfigError("'preset' must be a string");
  const Preset& preset = find_preset(raw.at("preset").get<std::string>());
  json merged = preset.config;
  json patch = raw;
  patch["preset"] = preset.name;
  merged.merge_patch(patch);
  return merged;
}

}  // namespace

ExperimentConfig load_config(const json& raw) {
  const json j = merged_with_preset(raw);
  check_keys(j, "",
             {"preset", "kind", "method", "model", "grid", "velocity", "sweep", "qtm",
              "correlation", "study", "semiclassical", "threads"});
  ExperimentConfig c;
  c.resolved = j;
  c.preset = text(j, "preset", "", "");
  if (!j.contains("kind")) throw ConfigError("missing 'kind'");
  c.kind = parse_kind(text(j, "kind", "", ""));
  if (j.contains("method") && j.at("method").is_array()) {
    c.methods.clear();
    for (const json& e : j.at("method")) {
      if (!e.is_string()) throw ConfigError("'method' entries must be strings");
      c.methods.push_back(parse_method(e.get<std::string>()));
    }
    if (c.methods.empty()) throw ConfigError("'method' must not be empty");
  } else {
    c.methods = {parse_method(text(j, "method", "all", ""))};
  }
  c.model = parse_model(j.value("model", json::object()));

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, "grid", {"n1_max", "n2_max"});
    FockGrid grid;
    grid.n1_max = static_cast<int>(integer(g, "n1_max", 15, "grid"));
    grid.n2_max = static_cast<int>(
        integer(g, "n2_max", c.model.single_mode() ? 0 : grid.n1_max, "grid"));
    if (grid.n1_max < 1 || grid.n2_max < 0 || grid.n1_max > 4096 || grid.n2_max > 4096) {
      throw ConfigError("grid bounds must lie in [1, 4096] (n2_max may be 0)");
    }
    c.grid = grid;
  }

  const json v = j.value("velocity", json::object());
  check_keys(v, "velocity", {"sampling", "v_min_fraction"});
  const std::string sampling = text(v, "sampling", "velocity", "velocity");
  if (sampling == "velocity") {
    c.sampling = TimeSampling::Velocity;
  } else if (sampling == "interaction-time") {
    c.sampling = TimeSampling::InteractionTime;
  } else {
    throw ConfigError("velocity.sampling must be 'velocity' or 'interaction-time'");
  }
  c.v_min_fraction = number(v, "v_min_fraction", 0.05, "velocity");
  validate(VelocityModel{1.0, c.model.spread, c.v_min_fraction, c.sampling});

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, "sweep", {"min", "max", "points", "axis"});
    SweepSpec sw;
    sw.min = number(s, "min", 0.0, "sweep");
    sw.max = number(s, "max", 0.0, "sweep");
    sw.points = static_cast<int>(integer(s, "points", 0, "sweep"));
    const std::string axis = text(s, "axis", "gtau", "sweep");
    if (axis != "gtau" && axis != "theta") throw ConfigError("sweep.axis must be gtau or theta");
    sw.theta_axis = axis == "theta";
    if (!(sw.min > 0.0) || !(sw.max > sw.min)) {
      throw ConfigError("sweep bounds must satisfy 0 < min < max");
    }
    if (sw.points < 2) throw ConfigError("sweep.points must be at least 2");
    c.sweep = sw;
  }

  const json q = j.value("qtm", json::object());
  check_keys(q, "qtm", {"n_traj", "t_final", "seed", "burn_in", "dump_trajectories"});
  c.qtm.n_traj = integer(q, "n_traj", c.qtm.n_traj, "qtm");
  c.qtm.t_final = number(q, "t_final", c.qtm.t_final, "qtm");
  c.qtm.burn_in = number(q, "burn_in", c.qtm.burn_in, "qtm");
  if (q.contains("seed")) {
    if (!q.at("seed").is_number_integer()) throw ConfigError("'qtm.seed' must be an integer");
    c.qtm.seed = q.at("seed").is_number_unsigned() ? q.at("seed").get<std::uint64_t>()
                                                   : static_cast<std::uint64_t>(
                                                         q.at("seed").get<std::int64_t>());
  }
  if (q.contains("dump_trajectories")) {
    if (!q.at("dump_trajectories").is_boolean()) {
      throw ConfigError("'qtm.dump_trajectories' must be a boolean");
    }
    c.qtm.dump_trajectories = q.at("dump_trajectories").get<bool>();
  }
  if (c.qtm.n_traj < 1) throw ConfigError("qtm.n_traj must be at least 1");
  if (!(c.qtm.t_final > 0.0)) throw ConfigError("qtm.t_final must be positive");
  if (!(c.qtm.burn_in >= 0.0) || !(c.qtm.burn_in < c.qtm.t_final)) {
    throw ConfigError("qtm.burn_in must lie in [0, t_final)");
  }

  const json cr = j.value("correlation", json::object());
  check_keys(cr, "correlation", {"bin_width", "tau_max", "targets", "per_bin"});
  c.correlation.bin_width = number(cr, "bin_width", c.correlation.bin_width, "correlation");
  c.correlation.tau_max = number(cr, "tau_max", c.correlation.tau_max, "correlation");
  c.correlation.per_bin = static_cast<int>(integer(cr, "per_bin", 8, "correlation"));
  if (cr.contains("targets")) {
    const json& t = cr.at("targets");
    c.correlation.targets.clear();
    if (t.is_string()) {
      c.correlation.targets.push_back(parse_target(t.get<std::string>()));
    } else if (t.is_array() && !t.empty()) {
      for (const json& e : t) {
        if (!e.is_string()) throw ConfigError("correlation.targets must hold strings");
        c.correlation.targets.push_back(parse_target(e.get<std::string>()));
      }
    } else {
      throw ConfigError("correlation.targets must be a string or a non-empty array");
    }
  }
  for (Target t : c.correlation.targets) {
    if (t == Target::Mode2 && c.model.single_mode()) {
      throw ConfigError("a single-mode model has no mode-2 stream");
    }
  }
  if (!(c.correlation.bin_width > 0.0) || !(c.correlation.tau_max > 0.0)) {
    throw ConfigError("correlation bin_width and tau_max must be positive");
  }
  if (c.correlation.per_bin < 1) throw ConfigError("correlation.per_bin must be at least 1");
  fine_tau_grid(c.correlation.bin_width, c.correlation.tau_max, 1);

  const json st = j.value("study", json::object());
  check_keys(st, "study", {"spreads", "offset"});
  if (st.contains("spreads")) {
    if (!st.at("spreads").is_array()) throw ConfigError("study.spreads must be an array");
    for (const json& e : st.at("spreads")) {
      if (!e.is_number() || !(e.get<double>() >= 0.0)) {
        throw ConfigError("study.spreads must hold nonnegative numbers");
      }
      c.study.spreads.push_back(e.get<double>());
    }
  }
  c.study.offset = number(st, "offset", c.study.offset, "study");
  if (!(c.study.offset > 0.0 && c.study.offset < 0.5)) {
    throw ConfigError("study.offset must lie in (0, 0.5)");
  }

  const json sc = j.value("semiclassical", json::object());
  check_keys(sc, "semiclassical", {"s_max"});
  c.s_max = number(sc, "s_max", c.s_max, "semiclassical");
  if (!(c.s_max > 0.0)) throw ConfigError("semiclassical.s_max must be positive");

  const std::int64_t threads = integer(j, "threads", 1, "");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
  c.threads = static_cast<unsigned>(threads);

  switch (c.kind) {
    case ExperimentKind::SweepMean:
    case ExperimentKind::TrappingScan:
      if (!c.sweep) throw ConfigError("this experiment needs a [sweep] table");
      break;
    case ExperimentKind::VelocityStudy:
      if (c.study.spreads.empty()) throw ConfigError("velocity-study needs study.spreads");
      if (named(c, Method::Analytic)) {
        throw ConfigError("velocity-study has no analytic method; use generator, qtm or all");
      }
      break;
    case ExperimentKind::G2:
      if (uses(c, Method::Qtm) && !(c.qtm.t_final - c.qtm.burn_in > c.correlation.tau_max)) {
        throw ConfigError("qtm.t_final - qtm.burn_in must exceed correlation.tau_max");
      }
      break;
    default: break;
  }
  if (c.sweep && c.sweep->theta_axis && !(c.model.symmetric() || c.model.single_mode())) {
    throw ConfigError("a theta axis needs symmetric or single-mode parameters");
  }
  return c;
}

ExperimentConfig load_config_source(const std::string& source,
                                    const std::vector<std::string>& overrides) {
  json raw;
  std::error_code ec;
  if (std::filesystem::is_regular_file(source, ec)) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + source + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    raw = parse_toml(buf.str());
  } else {
    bool is_preset = true;
    try {
      find_preset(source);
    } catch (const ConfigError&) {
      is_preset = false;
    }
    if (!is_preset) throw ConfigError("no config file or preset named '" + source + "'");
    raw = json{{"preset", source}};
  }
  for (const std::string& o : overrides) apply_override(raw, o);
  return load_config(raw);
}

// ---------------------------------------------------------------------------
// Running

namespace {

bool exact_available(const ModelParams& p) {
  return p.spread == 0.0 && (p.symmetric() || p.single_mode());
}

/// The closed form is used when named, or under `all` when it exists.
bool use_analytic(const ExperimentConfig& c, bool available, const char* why) {
  if (named(c, Method::Analytic)) {
    if (!available) throw ConfigError(why);
    return true;
  }
  return uses(c, Method::Analytic) && available;
}

constexpr const char* kNoClosedForm =
    "the analytic solution needs symmetric or single-mode parameters and no spread";

double theta_scale(const ModelParams& p) { return p.g1 * std::sqrt(p.R / p.gamma1); }

double theta_of(const ModelParams& p) {
  return p.symmetric() ? pump_theta(p) : p.tau_int * theta_scale(p);
}

VelocityModel velocity_of(const ExperimentConfig& c, const ModelParams& p) {
  return {1.0, p.spread, c.v_min_fraction, c.sampling};
}

FockGrid grid_for(const ExperimentConfig& c, const ModelParams& p) {
  return c.grid ? *c.grid : default_grid(p);
}

JointDist generator_steady(const ExperimentConfig& c, const ModelParams& p, const FockGrid& grid) {
  const DiagGenerator gen =
      p.spread > 0.0 ? build_velocity_averaged(p, grid, velocity_of(c, p)) : build(p, grid);
  return steady_state(gen);
}

EnsembleResult run_ensemble(const ExperimentConfig& c, const ModelParams& p, const FockGrid& grid,
                            std::uint64_t seed, RecordLevel level) {
  EnsembleOptions o;
  o.level = c.qtm.dump_trajectories ? RecordLevel::Full : level;
  o.velocity = velocity_of(c, p);
  o.threads = c.threads;
  if (c.qtm.burn_in > 0.0) o.time_average_burn_in = c.qtm.burn_in;
  return ensemble_run(p, grid, c.qtm.t_final, c.qtm.n_traj, seed, o);
}

const JointDist& qtm_estimate(const EnsembleResult& e) {
  return e.time_averaged ? *e.time_averaged : e.histogram;
}

double g2_or_nan(const Eigen::VectorXd& marg) {
  return moments(marg).mean > 0.0 ? g2_zero(marg) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> sweep_values(const SweepSpec& s) {
  std::vector<double> out(static_cast<std::size_t>(s.points));
  for (int i = 0; i < s.points; ++i) {
    out[static_cast<std::size_t>(i)] = s.min + (s.max - s.min) * i / (s.points - 1);
  }
  return out;
}

ModelParams at_sweep_point(const ModelParams& base, const SweepSpec& s, double x) {
  ModelParams p = base;
  p.tau_int = s.theta_axis ? x / theta_scale(base) : x / base.g1;
  return validate(p);
}

std::string fmt(double v) { return format_number(v); }

MetaLines base_meta(const ExperimentConfig& c) {
  const ModelParams& p = c.model;
  MetaLines m{{"kind", std::string(to_string(c.kind))},
              {"method", method_label(c)},
              {"preset", c.preset.empty() ? "none" : c.preset},
              {"params", "g1=" + fmt(p.g1) + " g2=" + fmt(p.g2) + " gamma1=" + fmt(p.gamma1) +
                             " gamma2=" + fmt(p.gamma2) + " nb1=" + fmt(p.nb1) +
                             " nb2=" + fmt(p.nb2) + " R=" + fmt(p.R) +
                             " tau_int=" + fmt(p.tau_int) + " spread=" + fmt(p.spread)},
              {"spread_convention", "sigma_v/v0"},
              {"time_sampling", c.sampling == TimeSampling::Velocity ? "velocity" : "interaction-time"}};
  if (uses(c, Method::Qtm)) {
    m.emplace_back("seed", std::to_string(c.qtm.seed));
    m.emplace_back("n_traj", std::to_string(c.qtm.n_traj));
    m.emplace_back("t_final", fmt(c.qtm.t_final));
    m.emplace_back("burn_in", fmt(c.qtm.burn_in));
  }
  return m;
}

struct Artifacts {
  std::filesystem::path dir;
  json list = json::array();
  json diagnostics = json::object();
  std::vector<std::filesystem::path> files;

  std::ofstream open(const std::string& name, const std::string& label) {
    const std::filesystem::path path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    list.push_back({{"file", name}, {"label", label}});
    files.push_back(path);
    return out;
  }
};

void dump_trajectories(const ExperimentConfig& c, const EnsembleResult& e, Artifacts& a) {
  if (!c.qtm.dump_trajectories) return;
  auto out = a.open("trajectories.csv", "trajectory events");
  write_trajectories_csv(out, e.records);
}

void run_steady(const ExperimentConfig& c, Artifacts& a) {
  const ModelParams& p = c.model;
  const FockGrid grid = grid_for(c, p);
  std::vector<std::string> header{"n"};
  std::vector<Eigen::VectorXd> columns;
  std::vector<std::string> names;
  if (use_analytic(c, exact_available(p), kNoClosedForm)) {
    columns.push_back(marginal(steady_joint_dist(p, grid), 1));
    names.push_back("analytic");
  }
  if (uses(c, Method::Generator)) {
    columns.push_back(marginal(generator_steady(c, p, grid), 1));
    names.push_back("generator");
  }
  if (uses(c, Method::Qtm)) {
    const EnsembleResult e = run_ensemble(c, p, grid, c.qtm.seed, RecordLevel::Summary);
    columns.push_back(marginal(e.histogram, 1));
    names.push_back("qtm");
    if (e.time_averaged) {
      columns.push_back(marginal(*e.time_averaged, 1));
      names.push_back("qtm_time_averaged");
    }
    dump_trajectories(c, e, a);
  }
  header.insert(header.end(), names.begin(), names.end());
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(grid.rows()));
  for (Eigen::Index n = 0; n < grid.rows(); ++n) {
    auto& row = rows[static_cast<std::size_t>(n)];
    row.push_back(static_cast<double>(n));
    for (const auto& col : columns) row.push_back(col(n));
  }
  json tv = json::object();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    for (std::size_t k = i + 1; k < columns.size(); ++k) {
      tv[names[i] + "/" + names[k]] = tv_distance(columns[i], columns[k]);
    }
  }
  a.diagnostics["mode1_marginal_tv"] = tv;
  a.diagnostics["grid"] = {{"n1_max", grid.n1_max}, {"n2_max", grid.n2_max}};
  auto out = a.open("result.csv", "mode-1 photon distribution");
  write_table_csv(out, header, rows, base_meta(c));
}

void run_sweep(const ExperimentConfig& c, Artifacts& a) {
  const SweepSpec& s = *c.sweep;
  const bool analytic = use_analytic(c, exact_available(c.model), kNoClosedForm);
  std::vector<std::string> header{"gtau", "theta"};
  std::vector<std::string> methods;
  if (analytic) methods.push_back("analytic");
  if (uses(c, Method::Generator)) methods.push_back("generator");
  if (uses(c, Method::Qtm)) methods.push_back("qtm");
  for (const auto& m : methods) {
    header.push_back(m + "_mean");
    header.push_back(m + "_g2_zero");
  }
  const bool theta_ok = c.model.symmetric() || c.model.single_mode();
  std::vector<std::vector<double>> rows;
  const std::vector<double> xs = sweep_values(s);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const ModelParams p = at_sweep_point(c.model, s, xs[i]);
    const FockGrid grid = grid_for(c, p);
    std::vector<double> row{p.g1 * p.tau_int,
                            theta_ok ? theta_of(p) : std::numeric_limits<double>::quiet_NaN()};
    auto add = [&](const JointDist& d) {
      const Eigen::VectorXd m = marginal(d, 1);
      row.push_back(moments(m).mean);
      row.push_back(g2_or_nan(m));
    };
    for (const auto& m : methods) {
      if (m == "analytic") add(steady_joint_dist(p, grid));
      if (m == "generator") add(generator_steady(c, p, grid));
      if (m == "qtm") {
        add(qtm_estimate(run_ensemble(c, p, grid, trajectory_seed(c.qtm.seed, i),
                                      RecordLevel::Summary)));
      }
    }
    rows.push_back(std::move(row));
  }
  auto out = a.open("result.csv", "mode-1 mean and g2(0) along the sweep");
  write_table_csv(out, header, rows, base_meta(c));
}

void run_trapping_scan(const ExperimentConfig& c, Artifacts& a) {
  const SweepSpec& s = *c.sweep;
  const bool exact = exact_available(c.model);
  const bool analytic = use_analytic(c, exact, kNoClosedForm);
  if (!analytic && !uses(c, Method::Generator)) {
    throw ConfigError("trapping-scan runs the analytic or the generator method");
  }
  const bool single = c.model.single_mode();
  std::vector<std::vector<double>> rows;
  std::vector<double> totals;
  const std::vector<double> xs = sweep_values(s);
  for (double x : xs) {
    const ModelParams p = at_sweep_point(c.model, s, x);
    const FockGrid grid = grid_for(c, p);
    const JointDist d = exact && analytic ? steady_joint_dist(p, grid)
                                                               : generator_steady(c, p, grid);
    const Eigen::VectorXd total = single ? Eigen::VectorXd(marginal(d, 1))
                                         : d.total_photon_distribution();
    const Eigen::VectorXd m1 = marginal(d, 1);
    totals.push_back(moments(total).mean);
    rows.push_back({p.g1 * p.tau_int, moments(total).mean, g2_or_nan(total), moments(m1).mean,
                    g2_or_nan(m1)});
  }
  const std::vector<std::string> header{"gtau", "total_mean", "total_g2_zero", "mode1_mean",
                                        "mode1_g2_zero"};
  MetaLines meta = base_meta(c);
  const double gtau_max = c.model.g1 * at_sweep_point(c.model, s, s.max).tau_int;
  std::vector<std::vector<double>> traps;
  for (int photons = 0; photons <= 3; ++photons) {
    // Two modes: k pi / sqrt(s + 2). One mode: k pi / sqrt(s + 1).
    const int shift = single ? 1 : 2;
    const double root = std::sqrt(static_cast<double>(photons + shift));
    for (int k = 1; k * kPi / root <= gtau_max; ++k) {
      traps.push_back({k * kPi / root, static_cast<double>(photons), static_cast<double>(k)});
    }
  }
  std::sort(traps.begin(), traps.end());
  json minima = json::array();
  for (std::size_t i = 1; i + 1 < totals.size(); ++i) {
    if (totals[i] < totals[i - 1] && totals[i] <= totals[i + 1]) minima.push_back(rows[i][0]);
  }
  a.diagnostics["local_minima_gtau"] = minima;
  {
    auto out = a.open("result.csv", "photon number versus g tau");
    write_table_csv(out, header, rows, meta);
  }
  const std::vector<std::string> th{"gtau", "photons", "k"};
  auto out = a.open("trapping_points.csv", "trapping conditions in range");
  write_table_csv(out, th, traps, meta);
}

void run_velocity_study(const ExperimentConfig& c, Artifacts& a) {
  const bool gen = uses(c, Method::Generator);
  const bool qtm = uses(c, Method::Qtm);
  std::vector<std::string> header{"spread"};
  if (gen) {
    for (const char* h : {"mean", "second_moment", "g2_zero", "shoulder_mean", "dip_depth"})
      header.emplace_back(h);
  }
  if (qtm) {
    for (const char* h : {"qtm_mean", "qtm_second_moment", "qtm_g2_zero"}) header.emplace_back(h);
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < c.study.spreads.size(); ++i) {
    ModelParams p = c.model;
    p.spread = c.study.spreads[i];
    validate(p);
    std::vector<double> row{p.spread};
    if (gen) {
      const FockGrid grid = grid_for(c, p);
      const Eigen::VectorXd m = marginal(generator_steady(c, p, grid), 1);
      const Moments mo = moments(m);
      double shoulder = 0.0;
      for (double sign : {-1.0, 1.0}) {
        ModelParams q = p;
        q.tau_int = p.tau_int * (1.0 + sign * c.study.offset);
        shoulder += 0.5 * moments(marginal(generator_steady(c, q, grid_for(c, q)), 1)).mean;
      }
      row.insert(row.end(), {mo.mean, mo.second_moment, g2_or_nan(m), shoulder, shoulder - mo.mean});
    }
    if (qtm) {
      const FockGrid grid = grid_for(c, p);
      const EnsembleResult e =
          run_ensemble(c, p, grid, trajectory_seed(c.qtm.seed, i), RecordLevel::Summary);
      const Eigen::VectorXd m = marginal(qtm_estimate(e), 1);
      const Moments mo = moments(m);
      row.insert(row.end(), {mo.mean, mo.second_moment, g2_or_nan(m)});
    }
    rows.push_back(std::move(row));
  }
  auto out = a.open("result.csv", "mode-1 statistics versus velocity spread");
  write_table_csv(out, header, rows, base_meta(c));
}

bool one_photon_trapped(const ModelParams& p) {
  if (p.spread != 0.0 || p.nb1 != 0.0 || p.nb2 != 0.0) return false;
  if (p.single_mode()) return pump_sin2(lambda_nm(1, 0, p.g1, 0.0) * p.tau_int) == 0.0;
  if (!p.symmetric()) return false;
  return pump_sin2(lambda_nm(1, 0, p.g1, p.g2) * p.tau_int) == 0.0;
}

void run_g2(const ExperimentConfig& c, Artifacts& a) {
  const ModelParams& p = c.model;
  const FockGrid grid = grid_for(c, p);
  const double bw = c.correlation.bin_width;
  const double tau_max = c.correlation.tau_max;
  const std::vector<double> fine = fine_tau_grid(bw, tau_max, c.correlation.per_bin);

  const bool trapped = one_photon_trapped(p);
  const bool analytic = use_analytic(
      c, trapped, "the closed-form g2 needs a one-photon trapping state with nb = 0 and no spread");
  std::map<std::string, CorrelationSeries> series;
  std::vector<std::string> order;
  auto keep = [&](const std::string& name, CorrelationSeries s) {
    series.emplace(name, std::move(s));
    order.push_back(name);
  };

  std::optional<EnsembleResult> ensemble;
  if (uses(c, Method::Qtm)) {
    ensemble = run_ensemble(c, p, grid, c.qtm.seed, RecordLevel::Leaks);
  }
  for (Target t : c.correlation.targets) {
    const std::string tag(to_string(t));
    if (ensemble) {
      keep("qtm_" + tag, pooled_correlation(ensemble->records, t, bw, tau_max, c.qtm.burn_in));
    }
    if (uses(c, Method::Generator)) {
      keep("generator_" + tag, bin_average(g2_regression(p, grid, t, fine), bw, tau_max));
    }
    if (analytic && t != Target::Mode2) {
      const TrappingCorrelation f = trapping_g2_formula(p, p.single_mode() ? 1 : 2);
      CorrelationSeries s;
      s.tau_centers = fine;
      for (double tau : fine) s.g2.push_back(f(tau));
      s.pair_counts.assign(fine.size(), 0);
      s.std_error.assign(fine.size(), 0.0);
      keep("analytic_" + tag, bin_average(s, bw, tau_max));
    }
  }
  if (ensemble) dump_trajectories(c, *ensemble, a);

  MetaLines meta = base_meta(c);
  for (const std::string& name : order) {
    MetaLines m = meta;
    m.emplace_back("series", name);
    {
      auto out = a.open("g2_" + name + ".csv", name);
      write_correlation_csv(out, series.at(name), m);
    }
    if (name == order.front()) {
      auto out = a.open("result.csv", name);
      write_correlation_csv(out, series.at(name), m);
    }
  }
  for (Target t : c.correlation.targets) {
    const std::string tag(to_string(t));
    const auto q = series.find("qtm_" + tag);
    const auto g = series.find("generator_" + tag);
    if (q == series.end() || g == series.end()) continue;
    std::size_t within = 0;
    for (std::size_t j = 0; j < q->second.size(); ++j) {
      within += std::abs(q->second.g2[j] - g->second.g2[j]) < 3.0 * q->second.std_error[j];
    }
    a.diagnostics["fraction_within_3_stderr_" + tag] =
        static_cast<double>(within) / static_cast<double>(q->second.size());
  }
}

void run_semiclassical(const ExperimentConfig& c, Artifacts& a) {
  std::vector<double> xs{c.model.g1 * c.model.tau_int};
  if (c.sweep) {
    xs.clear();
    for (double x : sweep_values(*c.sweep)) {
      xs.push_back(c.model.g1 * at_sweep_point(c.model, *c.sweep, x).tau_int);
    }
  }
  std::vector<std::vector<double>> rows;
  for (double gtau : xs) {
    ModelParams p = c.model;
    p.tau_int = gtau / p.g1;
    for (const SemiclassicalRoot& r : semiclassical_roots(p, c.s_max)) {
      rows.push_back({gtau, r.s, 0.5 * r.s, r.stable ? 1.0 : 0.0});
    }
  }
  const std::vector<std::string> header{"gtau", "total_photons", "mode1_photons", "stable"};
  auto out = a.open("result.csv", "semiclassical fixed points");
  write_table_csv(out, header, rows, base_meta(c));
}

}  // namespace

RunSummary run(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create '" + out_dir.string() + "': " + ec.message());
  Artifacts a;
  a.dir = out_dir;
  switch (config.kind) {
    case ExperimentKind::SteadyDist: run_steady(config, a); break;
    case ExperimentKind::SweepMean: run_sweep(config, a); break;
    case ExperimentKind::G2: run_g2(config, a); break;
    case ExperimentKind::TrappingScan: run_trapping_scan(config, a); break;
    case ExperimentKind::VelocityStudy: run_velocity_study(config, a); break;
    case ExperimentKind::Semiclassical: run_semiclassical(config, a); break;
  }
  RunSummary summary;
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json manifest;
  manifest["code_version"] = code_version();
  manifest["preset"] = config.preset;
  if (!config.preset.empty()) {
    const Preset& p = find_preset(config.preset);
    manifest["figure"] = p.figure;
    manifest["criteria"] = p.criteria;
  }
  manifest["kind"] = to_string(config.kind);
  manifest["method"] = method_label(config);
  manifest["config"] = config.resolved;
  manifest["seeds"] = {{"master", config.qtm.seed},
                       {"scheme", "splitmix64(master, trajectory index) -> mt19937_64"}};
  manifest["threads"] = config.threads;
  manifest["spread_convention"] = "sigma_v/v0";
  manifest["wall_seconds"] = summary.wall_seconds;
  manifest["artifacts"] = a.list;
  manifest["diagnostics"] = a.diagnostics;
  const std::filesystem::path mpath = out_dir / "manifest.json";
  std::ofstream out(mpath, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + mpath.string() + "'");
  out << manifest.dump(2) << '\n';
  a.files.push_back(mpath);
  summary.files = std::move(a.files);
  return summary;
}

}  // namespace microlaser
