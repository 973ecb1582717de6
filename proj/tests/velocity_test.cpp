#include "microlaser/analytic.hpp"
#include "microlaser/qtm.hpp"
#include "microlaser/velocity.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace microlaser;

TEST_SUITE("velocity") {
  TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
    const GaussLegendreRule rule = gauss_legendre(5);
    CHECK(rule.weights.sum() == doctest::Approx(2.0).epsilon(1e-14));
    // Degree 8 is within 2n - 1 = 9.
    const double x8 = (rule.nodes.array().pow(8) * rule.weights.array()).sum();
    CHECK(x8 == doctest::Approx(2.0 / 9.0).epsilon(1e-13));
    const double odd = (rule.nodes.array().pow(7) * rule.weights.array()).sum();
    CHECK(std::abs(odd) < 1e-14);
  }

  TEST_CASE("zero spread reduces to the sharp coefficient") {
    const InteractionTimeAverager avg(VelocityModel{});
    CHECK(avg.mean_ratio() == 1.0);
    CHECK(avg.mean_sin2(0.8) == pump_sin2(0.8));
    CHECK(avg.mean_sin2(std::numbers::pi) == 0.0);
  }

  TEST_CASE("small spread fills the trapping zero at second order") {
    // E[sin^2(pi u)] ~ pi^2 Var(u) for u close to 1.
    for (double spread : {1e-3, 1e-2}) {
      for (TimeSampling mode : {TimeSampling::Velocity, TimeSampling::InteractionTime}) {
        VelocityModel vm;
        vm.spread = spread;
        vm.sampling = mode;
        const InteractionTimeAverager avg(vm);
        const double expected = std::numbers::pi * std::numbers::pi * spread * spread;
        CHECK(avg.mean_sin2(std::numbers::pi) == doctest::Approx(expected).epsilon(0.05));
      }
    }
  }

  TEST_CASE("quadrature agrees with sampling") {
    VelocityModel vm;
    vm.spread = 0.2;
    const InteractionTimeAverager avg(vm);
    Rng rng(7);
    const int n = 400000;
    double sum = 0.0, sum_sin2 = 0.0, largest = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = sample_interaction_time(vm, 1.0, rng);
      largest = std::max(largest, u);
      sum += u;
      sum_sin2 += std::pow(std::sin(1.3 * u), 2);
    }
    CHECK(largest < 1.0 / vm.v_min_fraction);
    CHECK(sum / n == doctest::Approx(avg.mean_ratio()).epsilon(2e-3));
    CHECK(sum_sin2 / n == doctest::Approx(avg.mean_sin2(1.3)).epsilon(3e-3));
  }

  TEST_CASE("deterministic sampling returns the nominal time") {
    Rng rng(1);
    CHECK(sample_interaction_time(VelocityModel{}, 0.37, rng) == 0.37);
  }
}
