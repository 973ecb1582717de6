#include "microlaser/generator.hpp"

#include "microlaser/error.hpp"
#include "microlaser/velocity.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <unordered_map>

namespace microlaser {

namespace {

constexpr double kDriftTolerance = 1e-9;
constexpr double kNegativeTolerance = 1e-9;

template <class Kernel>
DiagGenerator assemble(const ModelParams& params, const FockGrid& grid, Kernel&& kernel) {
  validate(params);
  if (grid.n1_max < 0 || grid.n2_max < 0) throw ConfigError("grid bounds must be nonnegative");
  if (grid.n1_max > 4096 || grid.n2_max > 4096 || grid.size() > 2'000'000)
    throw ConfigError("grid too large");

  DiagGenerator gen;
  gen.grid = grid;
  gen.params = params;
  gen.pump_kernel.resize(grid.rows(), grid.cols());
  gen.boundary_leak = Eigen::VectorXd::Zero(grid.size());

  const ModelParams& p = params;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(grid.size()) * 5);

  for (int n2 = 0; n2 <= grid.n2_max; ++n2) {
    for (int n1 = 0; n1 <= grid.n1_max; ++n1) {
      const Eigen::Index j = grid.index(n1, n2);
      const double lambda = lambda_nm(n1, n2, p.g1, p.g2);
      const double s2 = lambda > 0.0 ? kernel(lambda * p.tau_int) : 0.0;
      gen.pump_kernel(n1, n2) = s2;
      double w1 = 0.0, w2 = 0.0;
      if (lambda > 0.0) {
        const double l2 = lambda * lambda;
        w1 = p.g1 * p.g1 * (n1 + 1) / l2;
        w2 = p.g2 * p.g2 * (n2 + 1) / l2;
      }
      double out = 0.0;
      double leak = 0.0;
      auto flow = [&](int m1, int m2, double rate) {
        if (rate == 0.0) return;
        if (grid.contains(m1, m2)) {
          triplets.emplace_back(grid.index(m1, m2), j, rate);
          out += rate;
        } else {
          leak += rate;
        }
      };
      flow(n1 + 1, n2, p.R * s2 * w1 + p.gamma1 * p.nb1 * (n1 + 1));
      flow(n1, n2 + 1, p.R * s2 * w2 + p.gamma2 * p.nb2 * (n2 + 1));
      flow(n1 - 1, n2, p.gamma1 * (p.nb1 + 1.0) * n1);
      flow(n1, n2 - 1, p.gamma2 * (p.nb2 + 1.0) * n2);
      triplets.emplace_back(j, j, -out);
      gen.boundary_leak(j) = leak;
      gen.max_outflow = std::max(gen.max_outflow, out + leak);
    }
  }
  gen.rates.resize(grid.size(), grid.size());
  gen.rates.setFromTriplets(triplets.begin(), triplets.end());
  gen.rates.makeCompressed();
  return gen;
}

}  // namespace

double DiagGenerator::truncation_leak(const JointDist& dist) const {
  return dist.vec().dot(boundary_leak);
}

DiagGenerator build(const ModelParams& params, const FockGrid& grid) {
  return assemble(params, grid, [](double phase) { return pump_sin2(phase); });
}

DiagGenerator build_velocity_averaged(const ModelParams& params, const FockGrid& grid,
                                      const VelocityModel& velocity, int quad_points) {
  if (quad_points < 3) throw ConfigError("quad_points must be at least 3");
  if (velocity.deterministic()) return build(params, grid);
  const InteractionTimeAverager averager(velocity, quad_points);
  std::unordered_map<double, double> cache;
  return assemble(params, grid, [&](double phase) {
    auto [it, inserted] = cache.try_emplace(phase, 0.0);
    if (inserted) it->second = averager.mean_sin2(phase);
    return it->second;
  });
}

double default_step(const DiagGenerator& gen) {
  return gen.max_outflow > 0.0 ? 0.1 / gen.max_outflow : 1.0;
}

namespace detail {

void rk4_step(const Eigen::SparseMatrix<double>& q, Eigen::VectorXd& p, double h,
              Eigen::VectorXd (&work)[5]) {
  Eigen::VectorXd& k1 = work[0];
  Eigen::VectorXd& k2 = work[1];
  Eigen::VectorXd& k3 = work[2];
  Eigen::VectorXd& k4 = work[3];
  Eigen::VectorXd& tmp = work[4];
  k1.noalias() = q * p;
  tmp = p + (0.5 * h) * k1;
  k2.noalias() = q * tmp;
  tmp = p + (0.5 * h) * k2;
  k3.noalias() = q * tmp;
  tmp = p + h * k3;
  k4.noalias() = q * tmp;
  p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void finish_evolution(JointDist& dist) {
  const double min = dist.p.minCoeff();
  if (min < -kNegativeTolerance) {
    throw NumericalError("RK4 instability: probability " + std::to_string(min) +
                         " is negative; reduce the step");
  }
  const double drift = std::abs(dist.total() - 1.0);
  if (drift > kDriftTolerance) {
    std::cerr << "warning: RK4 probability drift " << drift << " exceeds 1e-9; renormalizing\n";
    dist.normalize();
  }
}

}  // namespace detail

JointDist rk4_evolve(const DiagGenerator& gen, const JointDist& dist, double t_final, double dt) {
  if (dist.grid != gen.grid) throw ConfigError("distribution and generator grids differ");
  if (!(t_final >= 0.0)) throw ConfigError("t_final must be nonnegative");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const double times[] = {t_final};
  return rk4_evolve_observed(gen, dist, times, dt, [](std::size_t, const JointDist&) {});
}

double stationarity_residual(const DiagGenerator& gen, const JointDist& dist) {
  const Eigen::VectorXd r = gen.rates * dist.vec();
  return r.cwiseAbs().maxCoeff();
}

namespace {

JointDist solve_direct(const DiagGenerator& gen) {
  const Eigen::Index n = gen.grid.size();
  // Replace the balance equation of state 0 by the normalization sum P = 1.
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(gen.rates.nonZeros() + n));
  for (Eigen::Index col = 0; col < gen.rates.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(gen.rates, col); it; ++it) {
      if (it.row() != 0) triplets.emplace_back(it.row(), col, it.value());
    }
    triplets.emplace_back(0, col, 1.0);
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericalError("steady state: sparse LU failed");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(0) = 1.0;
  Eigen::VectorXd x = lu.solve(b);
  const Eigen::VectorXd r = b - a * x;
  x += lu.solve(r);

  JointDist dist(gen.grid);
  dist.vec() = x;
  const double scale = dist.p.cwiseAbs().maxCoeff();
  if (dist.p.minCoeff() < -1e-10 * scale)
    throw NumericalError("steady state: solution has significantly negative entries");
  dist.p = dist.p.cwiseMax(0.0);
  dist.normalize();
  return dist;
}

JointDist solve_time_march(const DiagGenerator& gen, const SteadyOptions& options) {
  const double unit = 1.0 / gen.params.gamma1;
  const double chunk = options.checkpoint * unit;
  const double dt = default_step(gen);
  JointDist current = JointDist::point_mass(gen.grid, 0, 0);
  double last_tv = 1.0;
  for (double t = 0.0; t < options.max_time * unit; t += chunk) {
    JointDist next = rk4_evolve(gen, current, chunk, dt);
    last_tv = tv_distance(next, current);
    current = std::move(next);
    if (last_tv < options.tolerance) return current;
  }
  throw NumericalError("steady state did not converge within max_time; last TV " +
                       std::to_string(last_tv));
}

}  // namespace

JointDist steady_state(const DiagGenerator& gen, const SteadyOptions& options) {
  JointDist dist = options.method == SteadyMethod::Direct ? solve_direct(gen)
                                                          : solve_time_march(gen, options);
  const double gamma = gen.params.gamma1;
  const double residual = stationarity_residual(gen, dist);
  if (options.method == SteadyMethod::Direct && residual > 1e-8 * gamma)
    throw NumericalError("steady state residual " + std::to_string(residual) +
                         " exceeds 1e-8 gamma");
  const double leak = gen.truncation_leak(dist);
  if (leak > 1e-9 * gamma)
    throw NumericalError("truncation leak " + std::to_string(leak) +
                         " exceeds 1e-9 gamma; enlarge the grid");
  return dist;
}

JointDist conditional_state(const JointDist& dist, Target target, std::array<double, 2> weights) {
  const FockGrid& g = dist.grid;
  JointDist out(g);
  auto annihilate_mode1 = [&](double w) {
    if (w == 0.0 || g.n1_max == 0) return;
    const Eigen::VectorXd n = Eigen::VectorXd::LinSpaced(g.n1_max, 1.0, g.n1_max);
    out.p.topRows(g.n1_max) += w * (n.asDiagonal() * dist.p.bottomRows(g.n1_max));
  };
  auto annihilate_mode2 = [&](double w) {
    if (w == 0.0 || g.n2_max == 0) return;
    const Eigen::VectorXd n = Eigen::VectorXd::LinSpaced(g.n2_max, 1.0, g.n2_max);
    out.p.leftCols(g.n2_max) += w * (dist.p.rightCols(g.n2_max) * n.asDiagonal());
  };
  switch (target) {
    case Target::Mode1: annihilate_mode1(1.0); break;
    case Target::Mode2: annihilate_mode2(1.0); break;
    case Target::Total:
      annihilate_mode1(weights[0]);
      annihilate_mode2(weights[1]);
      break;
  }
  if (!(out.total() > 0.0))
    throw NumericalError("conditional state undefined: the cavity has no photons");
  out.normalize();
  return out;
}

CorrelationSeries g2_regression(const ModelParams& params, const FockGrid& grid, Target target,
                                std::span<const double> tau_grid,
                                const RegressionOptions& options) {
  validate(params);
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    if (!(tau_grid[k] >= 0.0) || (k > 0 && !(tau_grid[k] > tau_grid[k - 1])))
      throw ConfigError("tau grid must be nonnegative and strictly increasing");
  }
  const bool average = options.velocity_average.value_or(params.spread > 0.0);
  VelocityModel vm = options.velocity;
  vm.spread = params.spread;
  const DiagGenerator gen = average ? build_velocity_averaged(params, grid, vm) : build(params, grid);
  const JointDist ss = steady_state(gen);

  // Leak-rate weights gamma_a (nb_a + 1) for the merged stream.
  const std::array<double, 2> w = {params.gamma1 * (params.nb1 + 1.0),
                                   params.gamma2 * (params.nb2 + 1.0)};
  Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(grid.rows(), grid.cols());
  for (int n2 = 0; n2 <= grid.n2_max; ++n2) {
    for (int n1 = 0; n1 <= grid.n1_max; ++n1) {
      switch (target) {
        case Target::Mode1: obs(n1, n2) = n1; break;
        case Target::Mode2: obs(n1, n2) = n2; break;
        case Target::Total: obs(n1, n2) = w[0] * n1 + w[1] * n2; break;
      }
    }
  }
  const double mean_ss = obs.cwiseProduct(ss.p).sum();
  if (!(mean_ss > 0.0)) throw NumericalError("g2 diverges: the cavity has no photons");
  const JointDist start = conditional_state(ss, target, w);

  // Step refinement compares full distributions at a bounded number of
  // observation points.
  const std::size_t stride = std::max<std::size_t>(
      1, static_cast<std::size_t>(grid.size()) * tau_grid.size() / 2'000'000 + 1);
  auto run = [&](double dt, std::vector<JointDist>* states) {
    std::vector<double> values(tau_grid.size());
    rk4_evolve_observed(gen, start, tau_grid, dt, [&](std::size_t k, const JointDist& d) {
      values[k] = obs.cwiseProduct(d.p).sum() / mean_ss;
      if (states && (k % stride == 0 || k + 1 == tau_grid.size())) states->push_back(d);
    });
    return values;
  };

  std::vector<double> values;
  if (options.step > 0.0) {
    values = run(options.step, nullptr);
  } else {
    double dt = default_step(gen);
    std::vector<JointDist> coarse;
    values = run(dt, &coarse);
    for (int h = 0; h < options.max_halvings; ++h) {
      dt *= 0.5;
      std::vector<JointDist> fine;
      std::vector<double> refined = run(dt, &fine);
      double worst = 0.0;
      for (std::size_t k = 0; k < fine.size(); ++k)
        worst = std::max(worst, tv_distance(fine[k], coarse[k]));
      values = std::move(refined);
      coarse = std::move(fine);
      if (worst < options.refine_tolerance) break;
    }
  }

  CorrelationSeries series;
  series.tau_centers.assign(tau_grid.begin(), tau_grid.end());
  series.g2 = std::move(values);
  series.pair_counts.assign(series.g2.size(), 0);
  series.std_error.assign(series.g2.size(), 0.0);
  series.meta.tau_max = tau_grid.empty() ? 0.0 : tau_grid.back();
  return series;
}

}  // namespace microlaser
