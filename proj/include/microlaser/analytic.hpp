#pragma once

#include "microlaser/model.hpp"

#include <Eigen/Core>

#include <cmath>
#include <vector>

namespace microlaser {

/// |sin(phase)| below this is treated as an exact trapping zero.
inline constexpr double kTrapTolerance = 1e-9;

/// Rabi frequency of the |a, n, m> manifold: sqrt(g1^2 (n+1) + g2^2 (m+1)).
template <class Scalar>
Scalar lambda_nm(int n, int m, Scalar g1, Scalar g2) {
  using std::sqrt;
  return sqrt(g1 * g1 * Scalar(n + 1) + g2 * g2 * Scalar(m + 1));
}

/// sin^2(phase), clamped to exactly zero at a trapping point.
template <class Scalar>
Scalar pump_sin2(Scalar phase) {
  using std::abs;
  using std::sin;
  const Scalar s = sin(phase);
  return abs(s) < Scalar(kTrapTolerance) ? Scalar(0) : s * s;
}

/// Joint photon-number distribution P(n1, n2); rows index n1, columns n2.
struct JointDist {
  FockGrid grid;
  Eigen::MatrixXd p;

  JointDist() = default;
  explicit JointDist(const FockGrid& g) : grid(g), p(Eigen::MatrixXd::Zero(g.rows(), g.cols())) {}

  static JointDist point_mass(const FockGrid& g, int n1, int n2);

  [[nodiscard]] double total() const { return p.sum(); }
  void normalize();

  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> vec() const {
    return {p.data(), p.size()};
  }
  [[nodiscard]] Eigen::Map<Eigen::VectorXd> vec() { return {p.data(), p.size()}; }

  /// Q(s) = sum over n1 + n2 = s, for s = 0 .. n1_max + n2_max.
  [[nodiscard]] Eigen::VectorXd total_photon_distribution() const;
};

/// Total-variation distance 0.5 * sum |p - q|.
double tv_distance(const Eigen::Ref<const Eigen::VectorXd>& p,
                   const Eigen::Ref<const Eigen::VectorXd>& q);
double tv_distance(const JointDist& a, const JointDist& b);

/// Detailed-balance steady state. Symmetric parameters use the two-mode
/// product solution; single-mode parameters (g2 = nb2 = 0) use the
/// one-mode balance and leave every n2 > 0 entry at zero. Throws
/// ConfigError for other parameters and NumericalError when the grid
/// holds less than 1 - 1e-10 of the probability.
JointDist steady_joint_dist(const ModelParams& params, const FockGrid& grid);

/// Exact probability mass the detailed-balance solution puts outside grid.
double analytic_outside_mass(const ModelParams& params, const FockGrid& grid);

/// Smallest admissible grid (tail mass < 1e-10), floor 15, cap 256 per
/// mode. Uses the exact solution when one exists, otherwise a birth-death
/// chain on the total photon number that stochastically dominates it.
FockGrid default_grid(const ModelParams& params);

/// Single-mode marginal, mode = 1 or 2.
Eigen::VectorXd marginal(const JointDist& dist, int mode);

struct Moments {
  double mean = 0.0;
  double second_moment = 0.0;

  /// (<n^2> - <n>^2) / <n>; throws NumericalError when <n> = 0.
  [[nodiscard]] double fano() const;
  [[nodiscard]] double variance() const { return second_moment - mean * mean; }
};
Moments moments(const Eigen::Ref<const Eigen::VectorXd>& marg);

/// (<n^2> - <n>) / <n>^2; throws NumericalError when <n> = 0.
double g2_zero(const Eigen::Ref<const Eigen::VectorXd>& marg);

/// k pi / sqrt(total + 2), k = 1 .. k_max.
std::vector<double> trapping_points(int total_photons, int k_max);

struct SemiclassicalRoot {
  double s = 0.0;  ///< total photon number n + m
  bool stable = false;
};
using SemiclassicalRoots = std::vector<SemiclassicalRoot>;

/// Roots of R sin^2(tau lambda(s)) = gamma1 n + gamma2 m on [0, s_max]
/// along the ray n = f s, m = (1 - f) s (f = mode1_fraction).
SemiclassicalRoots semiclassical_roots(const ModelParams& params, double s_max,
                                       double mode1_fraction = 0.5);

/// Gain minus loss of the semiclassical rate equation along the ray.
double semiclassical_residual(const ModelParams& params, double s, double mode1_fraction = 0.5);

/// g2(tau) = 1 - exp(-eta tau) at a one-photon trapping point.
struct TrappingCorrelation {
  double eta = 0.0;
  [[nodiscard]] double operator()(double tau) const { return -std::expm1(-eta * tau); }
};

/// Single mode: eta = R sin^2(g tau_int) + gamma. Two modes:
/// eta = R sin^2(g tau_int sqrt 2) + gamma. Uses g1 and gamma1.
TrappingCorrelation trapping_g2_formula(const ModelParams& params, int mode_count);

/// Resonance-fluorescence intensity correlation of a driven two-level atom.
double resonance_fluorescence_g2(double rabi, double linewidth, double tau);

}  // namespace microlaser
