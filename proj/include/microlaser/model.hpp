#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>

namespace microlaser {

/// Physical parameters of the two-mode microlaser. All rates are in units
/// of the mode-1 field decay rate in the shipped presets (gamma1 = 1).
struct ModelParams {
  double g1 = 1.0;       ///< atom / mode-1 coupling
  double g2 = 1.0;       ///< atom / mode-2 coupling
  double gamma1 = 1.0;   ///< mode-1 field decay rate
  double gamma2 = 1.0;   ///< mode-2 field decay rate
  double nb1 = 0.0;      ///< mode-1 mean thermal photon number
  double nb2 = 0.0;      ///< mode-2 mean thermal photon number
  double R = 1.0;        ///< atomic injection rate
  double tau_int = 1.0;  ///< nominal interaction time
  double spread = 0.0;   ///< relative velocity spread dv/v0 (standard deviation)

  /// g1 = g2, gamma1 = gamma2, nb1 = nb2. Exact comparison.
  [[nodiscard]] bool symmetric() const noexcept {
    return g1 == g2 && gamma1 == gamma2 && nb1 == nb2;
  }
  /// Mode 2 can never be populated: no coupling and no thermal photons.
  [[nodiscard]] bool single_mode() const noexcept { return g2 == 0.0 && nb2 == 0.0; }

  bool operator==(const ModelParams&) const = default;
};

/// Returns params unchanged, or throws ConfigError naming the first
/// violated invariant.
const ModelParams& validate(const ModelParams& params);

/// Pump parameter theta = g tau_int sqrt(R / gamma). Symmetric params only.
double pump_theta(const ModelParams& params);

/// Single-mode microlaser expressed in the two-mode model (g2 = nb2 = 0).
ModelParams single_mode_preset(double g, double gamma, double nb, double R, double tau_int);

/// Symmetric two-mode microlaser.
ModelParams symmetric_preset(double g, double gamma, double nb, double R, double tau_int,
                             double spread = 0.0);

/// Truncated two-mode Fock grid: 0 <= n1 <= n1_max, 0 <= n2 <= n2_max.
/// States are stored column-major, matching Eigen::MatrixXd(n1, n2).
struct FockGrid {
  int n1_max = 15;
  int n2_max = 15;

  [[nodiscard]] Eigen::Index rows() const noexcept { return n1_max + 1; }
  [[nodiscard]] Eigen::Index cols() const noexcept { return n2_max + 1; }
  [[nodiscard]] Eigen::Index size() const noexcept { return rows() * cols(); }
  [[nodiscard]] Eigen::Index index(int n1, int n2) const noexcept {
    return static_cast<Eigen::Index>(n1) + rows() * static_cast<Eigen::Index>(n2);
  }
  [[nodiscard]] bool contains(int n1, int n2) const noexcept {
    return n1 >= 0 && n2 >= 0 && n1 <= n1_max && n2 <= n2_max;
  }

  bool operator==(const FockGrid&) const = default;
};

/// How per-atom interaction times are distributed.
enum class TimeSampling {
  Velocity,         ///< v ~ Normal(v0, spread v0); tau = tau_nominal v0 / v
  InteractionTime,  ///< tau / tau_nominal ~ Normal(1, spread) directly
};

/// Atomic beam velocity distribution. Samples with v <= v_min_fraction v0
/// are rejected and redrawn.
struct VelocityModel {
  double v0 = 1.0;
  double spread = 0.0;
  double v_min_fraction = 0.05;
  TimeSampling sampling = TimeSampling::Velocity;

  [[nodiscard]] bool deterministic() const noexcept { return spread == 0.0; }
  bool operator==(const VelocityModel&) const = default;
};

const VelocityModel& validate(const VelocityModel& vm);

/// Velocity model carried by params (spread from params, default bounds).
VelocityModel velocity_model(const ModelParams& params);

}  // namespace microlaser
