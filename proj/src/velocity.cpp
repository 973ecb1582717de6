#include "microlaser/velocity.hpp"

#include "microlaser/analytic.hpp"
#include "microlaser/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace microlaser {

GaussLegendreRule gauss_legendre(int points) {
  if (points < 1) throw ConfigError("Gauss-Legendre rule needs at least one point");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
  for (int k = 1; k < points; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = beta;
    jacobi(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussLegendreRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = 2.0 * eig.eigenvectors().row(0).transpose().array().square();
  return rule;
}

namespace {

constexpr double kSigmaReach = 12.0;

}  // namespace

InteractionTimeAverager::InteractionTimeAverager(const VelocityModel& vm, int points_per_panel,
                                                 double tolerance, int max_panels)
    : vm_(validate(vm)), tolerance_(tolerance) {
  if (points_per_panel < 3) throw ConfigError("quadrature needs at least 3 points per panel");
  if (vm_.deterministic()) return;
  const double sigma = vm_.spread;
  const double xmin = vm_.v_min_fraction;
  const bool by_velocity = vm_.sampling == TimeSampling::Velocity;
  const double lo_x = std::max(xmin, 1.0 - kSigmaReach * sigma);
  const double hi_x = 1.0 + kSigmaReach * sigma;
  if (by_velocity) {
    lo_ = 1.0 / hi_x;
    hi_ = 1.0 / lo_x;
  } else {
    lo_ = lo_x;
    hi_ = hi_x;
  }
  auto density = [&](double u) {
    if (by_velocity) {
      const double z = (1.0 / u - 1.0) / sigma;
      return std::exp(-0.5 * z * z) / (u * u);
    }
    const double z = (u - 1.0) / sigma;
    return std::exp(-0.5 * z * z);
  };

  const GaussLegendreRule rule = gauss_legendre(points_per_panel);
  for (int panels = 1; panels <= max_panels; panels *= 2) {
    Level level;
    level.u.reserve(static_cast<std::size_t>(panels * points_per_panel));
    level.w.reserve(level.u.capacity());
    const double h = (hi_ - lo_) / panels;
    double norm = 0.0;
    for (int j = 0; j < panels; ++j) {
      const double mid = lo_ + (j + 0.5) * h;
      for (int i = 0; i < points_per_panel; ++i) {
        const double u = mid + 0.5 * h * rule.nodes(i);
        const double w = 0.5 * h * rule.weights(i) * density(u);
        level.u.push_back(u);
        level.w.push_back(w);
        norm += w;
      }
    }
    for (double& w : level.w) w /= norm;
    levels_.push_back(std::move(level));
  }
}

template <class F>
double InteractionTimeAverager::refine(F&& f) const {
  double previous = 0.0;
  double current = 0.0;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const Level& level = levels_[l];
    current = 0.0;
    for (std::size_t i = 0; i < level.u.size(); ++i) current += level.w[i] * f(level.u[i]);
    if (l >= 2 && std::abs(current - previous) < tolerance_) break;
    previous = current;
  }
  return current;
}

double InteractionTimeAverager::mean_sin2(double phase) const {
  if (vm_.deterministic()) return pump_sin2(phase);
  return refine([phase](double u) {
    const double s = std::sin(phase * u);
    return s * s;
  });
}

double InteractionTimeAverager::mean_ratio() const {
  if (vm_.deterministic()) return 1.0;
  return refine([](double u) { return u; });
}

}  // namespace microlaser
