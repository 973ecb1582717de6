#pragma once

#include "microlaser/analytic.hpp"
#include "microlaser/correlation.hpp"
#include "microlaser/model.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace microlaser {

/// Diagonal master equation dP/dt = rates * P on a truncated grid.
///
/// Column j of `rates` holds the transitions out of state j. Transitions
/// that would leave the grid are dropped on both sides, so every column sums
/// to zero; the dropped rate per state is kept in `boundary_leak`.
/// `pump_kernel` holds sin^2(lambda(n1, n2) tau) per state (velocity
/// averaged when built that way).
struct DiagGenerator {
  FockGrid grid;
  ModelParams params;
  Eigen::SparseMatrix<double> rates;
  Eigen::MatrixXd pump_kernel;
  Eigen::VectorXd boundary_leak;
  double max_outflow = 0.0;

  /// Rate of probability that would leave the grid: sum_j P_j leak_j.
  [[nodiscard]] double truncation_leak(const JointDist& dist) const;
};

/// Atomic gain/loss, field decay and thermal excitation for both modes.
DiagGenerator build(const ModelParams& params, const FockGrid& grid);

/// As build, with every sin^2 coefficient averaged over the per-atom
/// interaction-time distribution. Zero spread gives a bit-identical result.
DiagGenerator build_velocity_averaged(const ModelParams& params, const FockGrid& grid,
                                      const VelocityModel& velocity, int quad_points = 21);

/// Default explicit step 0.1 / (largest total outflow rate).
double default_step(const DiagGenerator& gen);

/// Classical RK4 from `dist` to t_final with steps no larger than dt.
JointDist rk4_evolve(const DiagGenerator& gen, const JointDist& dist, double t_final, double dt);

/// Evolves and calls `observe(k, P)` at every time in `times` (ascending,
/// >= 0). Returns the state at times.back().
template <class Observer>
JointDist rk4_evolve_observed(const DiagGenerator& gen, const JointDist& dist,
                              std::span<const double> times, double dt, Observer&& observe);

enum class SteadyMethod {
  Direct,     ///< sparse LU solve with the normalization row
  TimeMarch,  ///< RK4 from vacuum until checkpoints agree
};

struct SteadyOptions {
  SteadyMethod method = SteadyMethod::Direct;
  double checkpoint = 5.0;     ///< time-march checkpoint spacing, units of 1/gamma1
  double tolerance = 1e-10;    ///< time-march TV tolerance between checkpoints
  double max_time = 1e4;       ///< time-march budget, units of 1/gamma1
};

/// Stationary distribution. Throws NumericalError on non-convergence, a
/// residual above 1e-8 gamma1, or a truncation leak above 1e-9 gamma1.
JointDist steady_state(const DiagGenerator& gen, const SteadyOptions& options = {});

/// Max |rates * P| (fixed-point residual).
double stationarity_residual(const DiagGenerator& gen, const JointDist& dist);

/// Diagonal of a rho a^dagger / Tr(a rho a^dagger) for one mode. For Total
/// the photon is removed from mode alpha with weight w_alpha n_alpha.
JointDist conditional_state(const JointDist& dist, Target target,
                            std::array<double, 2> weights = {1.0, 1.0});

struct RegressionOptions {
  /// Use the velocity-averaged generator (default: when params.spread > 0).
  std::optional<bool> velocity_average;
  VelocityModel velocity;  ///< spread is taken from params when averaging
  double step = 0.0;       ///< 0 selects default_step and refinement
  double refine_tolerance = 1e-10;
  int max_halvings = 6;
};

/// g2(tau) by the conditional-state (quantum regression) method: the ratio
/// of the target leak rate after a detection to its stationary value.
CorrelationSeries g2_regression(const ModelParams& params, const FockGrid& grid, Target target,
                                std::span<const double> tau_grid,
                                const RegressionOptions& options = {});

// ---------------------------------------------------------------------------

namespace detail {
void rk4_step(const Eigen::SparseMatrix<double>& q, Eigen::VectorXd& p, double h,
              Eigen::VectorXd (&work)[5]);
void finish_evolution(JointDist& dist);
}  // namespace detail

template <class Observer>
JointDist rk4_evolve_observed(const DiagGenerator& gen, const JointDist& dist,
                              std::span<const double> times, double dt, Observer&& observe) {
  JointDist state = dist;
  Eigen::Map<Eigen::VectorXd> p = state.vec();
  Eigen::VectorXd current = p;
  Eigen::VectorXd work[5];
  double t = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double span = times[k] - t;
    if (span > 0.0) {
      const auto steps = static_cast<long>(std::ceil(span / dt - 1e-12));
      const double h = span / static_cast<double>(steps);
      for (long i = 0; i < steps; ++i) detail::rk4_step(gen.rates, current, h, work);
      t = times[k];
    }
    p = current;
    observe(k, static_cast<const JointDist&>(state));
  }
  p = current;
  detail::finish_evolution(state);
  return state;
}

}  // namespace microlaser
