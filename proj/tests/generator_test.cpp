#include "microlaser/analytic.hpp"
#include "microlaser/correlation.hpp"
#include "microlaser/error.hpp"
#include "microlaser/generator.hpp"

#include <doctest.h>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

using namespace microlaser;

namespace {

constexpr double pi = std::numbers::pi;

double rate(const DiagGenerator& gen, int from1, int from2, int to1, int to2) {
  return gen.rates.coeff(gen.grid.index(to1, to2), gen.grid.index(from1, from2));
}

Eigen::VectorXd column_sums(const DiagGenerator& gen) {
  return Eigen::RowVectorXd::Ones(gen.rates.rows()) * gen.rates;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("columns conserve probability and off-diagonal rates are nonnegative") {
    ModelParams p = symmetric_preset(0.8, 1.0, 0.1, 50.0, 1.0);
    p.g2 = 0.5;
    p.nb2 = 0.3;
    p.gamma2 = 1.7;
    const DiagGenerator gen = build(p, FockGrid{20, 18});
    CHECK(column_sums(gen).cwiseAbs().maxCoeff() < 1e-12);
    for (Eigen::Index col = 0; col < gen.rates.outerSize(); ++col) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(gen.rates, col); it; ++it) {
        if (it.row() != it.col()) CHECK(it.value() >= 0.0);
      }
    }
    CHECK(gen.boundary_leak.maxCoeff() > 0.0);
    CHECK(gen.boundary_leak(gen.grid.index(3, 4)) == 0.0);
  }

  TEST_CASE("rates follow the flow terms") {
    const double g = 1.0, gt = 0.8;
    const ModelParams p = symmetric_preset(g, 1.0, 0.1, 50.0, gt);
    const DiagGenerator gen = build(p, FockGrid{10, 10});
    CHECK(rate(gen, 0, 0, 1, 0) ==
          doctest::Approx(25.0 * std::pow(std::sin(gt * std::sqrt(2.0)), 2) + 0.1));
    // From (2,1): emission into mode 1 with weight n1 + 1 = 3 out of s + 2 = 5.
    const double s2 = std::pow(std::sin(gt * std::sqrt(5.0)), 2);
    CHECK(rate(gen, 2, 1, 3, 1) == doctest::Approx(50.0 * 3.0 / 5.0 * s2 + 0.1 * 3.0));
    CHECK(rate(gen, 2, 1, 2, 2) == doctest::Approx(50.0 * 2.0 / 5.0 * s2 + 0.1 * 2.0));
    CHECK(rate(gen, 2, 1, 1, 1) == doctest::Approx(1.1 * 2.0));
    CHECK(rate(gen, 2, 1, 2, 0) == doctest::Approx(1.1 * 1.0));
    CHECK(rate(gen, 2, 1, 3, 2) == 0.0);
  }

  TEST_CASE("one-photon trapping closes the door to two photons") {
    const ModelParams p = symmetric_preset(1.0, 1.0, 0.0, 10.0, pi / std::sqrt(3.0));
    const DiagGenerator gen = build(p, FockGrid{15, 15});
    CHECK(rate(gen, 1, 0, 2, 0) == 0.0);
    CHECK(rate(gen, 1, 0, 1, 1) == 0.0);
    CHECK(rate(gen, 0, 1, 0, 2) == 0.0);
    CHECK(rate(gen, 0, 0, 1, 0) > 0.0);
  }

  TEST_CASE("pure decay is exponential") {
    const ModelParams p = symmetric_preset(1.0, 1.0, 0.0, 1e-300, 1.0);
    const DiagGenerator gen = build(p, FockGrid{15, 15});
    const JointDist start = JointDist::point_mass(gen.grid, 1, 0);
    for (double t : {0.5, 2.0, 5.0}) {
      const JointDist d = rk4_evolve(gen, start, t, 0.01);
      CHECK(d.p(1, 0) == doctest::Approx(std::exp(-t)).epsilon(1e-9));
      CHECK(d.total() == doctest::Approx(1.0).epsilon(1e-12));
    }
    const JointDist same = rk4_evolve(gen, start, 0.0, 0.01);
    CHECK(same.p == start.p);
    const JointDist far = rk4_evolve(gen, JointDist::point_mass(gen.grid, 4, 3), 40.0, 0.01);
    CHECK(far.p(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("steady state matches the closed form") {
    for (double gt : {0.75, 0.8, 1.0}) {
      const ModelParams p = symmetric_preset(1.0, 1.0, 0.1, 50.0, gt);
      const FockGrid grid = default_grid(p);
      const DiagGenerator gen = build(p, grid);
      const JointDist ss = steady_state(gen);
      CHECK(tv_distance(ss, steady_joint_dist(p, grid)) < 1e-8);
      CHECK(stationarity_residual(gen, ss) < 1e-8);
    }
  }

  TEST_CASE("time march and direct solve agree") {
    const ModelParams p = symmetric_preset(1.0, 1.0, 0.1, 10.0, 1.2);
    const DiagGenerator gen = build(p, default_grid(p));
    SteadyOptions march;
    march.method = SteadyMethod::TimeMarch;
    CHECK(tv_distance(steady_state(gen, march), steady_state(gen)) < 1e-8);
  }

  TEST_CASE("long evolution conserves probability and reaches the closed form") {
    const ModelParams p = symmetric_preset(1.0, 1.0, 0.1, 10.0, 0.8);
    const FockGrid grid = default_grid(p);
    const DiagGenerator gen = build(p, grid);
    const JointDist d =
        rk4_evolve(gen, JointDist::point_mass(grid, 0, 0), 100.0, default_step(gen));
    CHECK(std::abs(d.total() - 1.0) < 1e-9);
    CHECK(tv_distance(d, steady_joint_dist(p, grid)) < 1e-8);
  }

  TEST_CASE("three-term flows vanish on the closed form") {
    const ModelParams p = symmetric_preset(1.0, 1.0, 0.1, 50.0, 0.8);
    const FockGrid grid = default_grid(p);
    const DiagGenerator gen = build(p, grid);
    const JointDist d = steady_joint_dist(p, grid);
    double worst = 0.0;
    for (int n2 = 0; n2 <= grid.n2_max; ++n2) {
      for (int n1 = 1; n1 <= grid.n1_max; ++n1) {
        const double up = rate(gen, n1 - 1, n2, n1, n2) * d.p(n1 - 1, n2);
        const double down = rate(gen, n1, n2, n1 - 1, n2) * d.p(n1, n2);
        worst = std::max(worst, std::abs(up - down));
      }
    }
    CHECK(worst < 1e-10);
  }

  TEST_CASE("nonsymmetric steady state loses the flat regions") {
    ModelParams p = symmetric_preset(0.8, 1.0, 0.1, 50.0, 1.0);
    p.g2 = 0.5;
    const FockGrid grid = default_grid(p);
    const DiagGenerator gen = build(p, grid);
    const JointDist ss = steady_state(gen);
    CHECK(ss.total() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stationarity_residual(gen, ss) < 1e-8);
    CHECK(gen.truncation_leak(ss) < 1e-9);
    double spread = 0.0;
    for (int s = 1; s < 10; ++s) spread = std::max(spread, std::abs(ss.p(s, 0) - ss.p(0, s)));
    CHECK(spread > 1e-6);
  }

  TEST_CASE("velocity averaging") {
    const ModelParams p = symmetric_preset(1.0, 1.0, 0.1, 50.0, 0.8);
    const FockGrid grid = default_grid(p);
    const DiagGenerator sharp = build(p, grid);
    const DiagGenerator zero = build_velocity_averaged(p, grid, VelocityModel{});
    CHECK(Eigen::MatrixXd(sharp.rates) == Eigen::MatrixXd(zero.rates));

    double previous = std::numeric_limits<double>::infinity();
    for (double spread : {1e-2, 1e-3, 1e-4}) {
      VelocityModel vm;
      vm.spread = spread;
      const DiagGenerator avg = build_velocity_averaged(p, grid, vm);
      CHECK(column_sums(avg).cwiseAbs().maxCoeff() < 1e-12);
      const double diff = Eigen::MatrixXd(avg.rates - sharp.rates).cwiseAbs().maxCoeff();
      CHECK(diff < previous / 50.0);
      previous = diff;
    }
  }

  TEST_CASE("conditional state") {
    const FockGrid g{3, 3};
    const JointDist one = conditional_state(JointDist::point_mass(g, 1, 0), Target::Mode1);
    CHECK(one.p(0, 0) == 1.0);
    CHECK_THROWS_AS(conditional_state(JointDist::point_mass(g, 0, 0), Target::Mode1),
                    NumericalError);

    JointDist mix(g);
    mix.p << 0.10, 0.05, 0.02, 0.01,
             0.20, 0.04, 0.03, 0.00,
             0.15, 0.06, 0.01, 0.02,
             0.10, 0.09, 0.07, 0.05;
    mix.normalize();
    // Brute-force annihilation map on the stacked diagonal.
    Eigen::MatrixXd a1 = Eigen::MatrixXd::Zero(g.size(), g.size());
    Eigen::MatrixXd a2 = Eigen::MatrixXd::Zero(g.size(), g.size());
    for (int n2 = 0; n2 <= 3; ++n2) {
      for (int n1 = 0; n1 <= 3; ++n1) {
        if (n1 > 0) a1(g.index(n1 - 1, n2), g.index(n1, n2)) = n1;
        if (n2 > 0) a2(g.index(n1, n2 - 1), g.index(n1, n2)) = n2;
      }
    }
    const Eigen::VectorXd p = mix.vec();
    const Eigen::VectorXd e1 = a1 * p / (a1 * p).sum();
    const Eigen::VectorXd et = (a1 + a2) * p / ((a1 + a2) * p).sum();
    CHECK((conditional_state(mix, Target::Mode1).vec() - e1).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((conditional_state(mix, Target::Total).vec() - et).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("regression g2 at a single-mode trapping point is the closed form") {
    const ModelParams p = single_mode_preset(1.0, 1.0, 0.0, 10.0, pi / std::sqrt(2.0));
    std::vector<double> tau;
    for (int i = 0; i <= 200; ++i) tau.push_back(0.05 * i);
    const CorrelationSeries s = g2_regression(p, default_grid(p), Target::Mode1, tau);
    const TrappingCorrelation f = trapping_g2_formula(p, 1);
    for (std::size_t i = 0; i < tau.size(); ++i) CHECK(std::abs(s.g2[i] - f(tau[i])) < 1e-6);
  }

  TEST_CASE("regression g2 starts at g2(0) and decays to one") {
    // g tau = 0.5 relaxes slowly (g2(20) is about 1.006), so it is checked later.
    for (auto [gt, late] : {std::pair{0.12, 20.0}, std::pair{0.5, 40.0}}) {
      const ModelParams p = symmetric_preset(1.0, 1.0, 0.0, 10.0, gt);
      const FockGrid grid = default_grid(p);
      const std::vector<double> tau{0.0, 1.0, late};
      const CorrelationSeries s = g2_regression(p, grid, Target::Mode1, tau);
      const double g0 = g2_zero(marginal(steady_joint_dist(p, grid), 1));
      CHECK(s.g2[0] == doctest::Approx(g0).epsilon(1e-9));
      CHECK(s.g2[0] > 1.0);
      CHECK(std::abs(s.g2[2] - 1.0) < 1e-3);
    }
  }

  TEST_CASE("regression rejects bad tau grids") {
    const ModelParams p = symmetric_preset(1.0, 1.0, 0.0, 10.0, 0.5);
    const std::vector<double> bad{0.0, 0.5, 0.5};
    CHECK_THROWS_AS(g2_regression(p, default_grid(p), Target::Mode1, bad), ConfigError);
  }
}
