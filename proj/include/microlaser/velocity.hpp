#pragma once

#include "microlaser/model.hpp"

#include <Eigen/Core>

#include <random>
#include <vector>

namespace microlaser {

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
struct GaussLegendreRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussLegendreRule gauss_legendre(int points);

/// Expectations over the per-atom interaction-time ratio u = tau / tau_nominal
/// induced by a VelocityModel. The ratio density is integrated with a
/// composite Gauss-Legendre rule (21 points per panel by default); panel counts double
/// until successive estimates agree within `tolerance`.
class InteractionTimeAverager {
public:
  explicit InteractionTimeAverager(const VelocityModel& vm, int points_per_panel = 21,
                                   double tolerance = 1e-8, int max_panels = 4096);

  /// E[sin^2(phase * u)] where phase = lambda * tau_nominal. With zero
  /// spread this is the trapping-clamped sharp value.
  [[nodiscard]] double mean_sin2(double phase) const;

  /// E[u]; equals tau_nominal-relative mean interaction time.
  [[nodiscard]] double mean_ratio() const;

  [[nodiscard]] const VelocityModel& model() const noexcept { return vm_; }

  /// Support [lo, hi] of u used by the rule.
  [[nodiscard]] double lower() const noexcept { return lo_; }
  [[nodiscard]] double upper() const noexcept { return hi_; }

private:
  struct Level {
    std::vector<double> u;
    std::vector<double> w;  // normalized: sums to one
  };

  template <class F>
  double refine(F&& f) const;

  VelocityModel vm_;
  double tolerance_;
  double lo_ = 1.0;
  double hi_ = 1.0;
  std::vector<Level> levels_;
};

/// Draws tau_int for one atom: v ~ Normal(v0, spread v0), redrawn while
/// v <= v_min_fraction v0; returns tau_nominal v0 / v. The
/// InteractionTime sampling mode draws the ratio directly instead.
template <class Rng>
double sample_interaction_time(const VelocityModel& vm, double tau_nominal, Rng& rng) {
  if (vm.deterministic()) return tau_nominal;
  if (vm.sampling == TimeSampling::Velocity) {
    std::normal_distribution<double> normal(vm.v0, vm.spread * vm.v0);
    double v = normal(rng);
    while (v <= vm.v_min_fraction * vm.v0) v = normal(rng);
    return tau_nominal * vm.v0 / v;
  }
  std::normal_distribution<double> normal(1.0, vm.spread);
  double u = normal(rng);
  while (u <= vm.v_min_fraction) u = normal(rng);
  return tau_nominal * u;
}

}  // namespace microlaser
