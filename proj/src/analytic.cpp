#include "microlaser/analytic.hpp"

#include "microlaser/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace microlaser {

namespace {

constexpr double kTailTolerance = 1e-10;
// Grids are also sized so the rate leaving through the edge stays below this
// multiple of gamma1.
constexpr double kEdgeLeakTolerance = 1e-10;
constexpr int kGridFloor = 15;
constexpr int kGridCap = 256;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Unnormalized log weights of a detailed-balance chain. For the two-mode
/// symmetric case, index s is the total photon number and the weight is per
/// grid cell; for the single-mode case, index n is the mode-1 occupation.
struct BalanceWeights {
  bool two_mode = true;
  std::vector<double> log_w;
  double log_max = 0.0;
};

/// Extends the chain until its remaining tail is negligible (< 1e-30
/// relative) and at least `min_length` entries exist.
template <class LogRatio>
std::vector<double> balance_chain(LogRatio&& log_ratio, double decay_onset, bool cell_multiplicity,
                                  std::size_t min_length) {
  std::vector<double> log_w{0.0};
  double log_z = 0.0;  // log of the running normalization
  constexpr std::size_t kHardCap = 2'000'000;
  for (std::size_t s = 1; s < kHardCap; ++s) {
    const double r = log_ratio(static_cast<int>(s));
    const double lw = log_w.back() + r;
    if (lw == kNegInf) {
      // Trapping: every higher state is unreachable.
      while (log_w.size() < min_length) log_w.push_back(kNegInf);
      return log_w;
    }
    log_w.push_back(lw);
    const double mult = cell_multiplicity ? std::log(static_cast<double>(s + 1)) : 0.0;
    const double term = lw + mult;
    log_z = std::max(log_z, term) + std::log1p(std::exp(-std::abs(log_z - term)));
    if (log_w.size() >= min_length && static_cast<double>(s) > decay_onset && r < 0.0 &&
        term - log_z < std::log(1e-32)) {
      return log_w;
    }
  }
  throw NumericalError("photon-number distribution does not decay; reduce thermal occupation");
}

BalanceWeights balance_weights(const ModelParams& p, std::size_t min_length) {
  BalanceWeights bw;
  if (p.symmetric()) {
    const double g = p.g1, gamma = p.gamma1, nb = p.nb1;
    const double log_scale = std::log(p.R / (gamma * (nb + 1.0)));
    auto log_ratio = [&](int k) {
      const double pump = pump_sin2(g * p.tau_int * std::sqrt(static_cast<double>(k + 1)));
      const double factor = gamma * nb / p.R + pump / static_cast<double>(k + 1);
      return factor == 0.0 ? kNegInf : log_scale + std::log(factor);
    };
    bw.two_mode = true;
    bw.log_w = balance_chain(log_ratio, 2.0 * p.R / gamma + 2.0, true, min_length);
  } else if (p.single_mode()) {
    const double g = p.g1, gamma = p.gamma1, nb = p.nb1;
    auto log_ratio = [&](int n) {
      const double up = p.R * pump_sin2(g * p.tau_int * std::sqrt(static_cast<double>(n))) +
                        gamma * nb * n;
      return up == 0.0 ? kNegInf : std::log(up / (gamma * (nb + 1.0) * n));
    };
    bw.two_mode = false;
    bw.log_w = balance_chain(log_ratio, 2.0 * p.R / gamma + 2.0, false, min_length);
  } else {
    throw ConfigError(
        "closed-form steady state requires symmetric or single-mode parameters");
  }
  bw.log_max = *std::max_element(bw.log_w.begin(), bw.log_w.end());
  return bw;
}

/// Number of cells with n1 + n2 = s inside the grid.
double cells_inside(const FockGrid& grid, std::size_t s) {
  const long lo = std::max<long>(0, static_cast<long>(s) - grid.n2_max);
  const long hi = std::min<long>(grid.n1_max, static_cast<long>(s));
  return hi >= lo ? static_cast<double>(hi - lo + 1) : 0.0;
}

double outside_mass(const BalanceWeights& bw, const FockGrid& grid) {
  double inside = 0.0, outside = 0.0;
  for (std::size_t s = 0; s < bw.log_w.size(); ++s) {
    const double w = std::exp(bw.log_w[s] - bw.log_max);
    if (w == 0.0) continue;
    if (bw.two_mode) {
      const double in = cells_inside(grid, s);
      inside += in * w;
      outside += (static_cast<double>(s + 1) - in) * w;
    } else if (static_cast<long>(s) <= grid.n1_max) {
      inside += w;
    } else {
      outside += w;
    }
  }
  return outside / (inside + outside);
}

std::size_t required_length(const FockGrid& grid) {
  return static_cast<std::size_t>(grid.n1_max + grid.n2_max + 1);
}

/// Birth-death chain on the total photon number whose births are never
/// slower and deaths never faster than those of the real process.
/// Largest rate at which a state on the edge of an n x n grid can leave it.
double edge_outflow(const ModelParams& p, int n) {
  return p.R + (p.gamma1 * p.nb1 + p.gamma2 * p.nb2) * (n + 1.0);
}

int dominating_cutoff(const ModelParams& p) {
  const bool single = p.single_mode();
  const double up = single ? p.gamma1 * p.nb1 : std::max(p.gamma1 * p.nb1, p.gamma2 * p.nb2);
  const double down =
      single ? p.gamma1 * (p.nb1 + 1.0)
             : std::min(p.gamma1 * (p.nb1 + 1.0), p.gamma2 * (p.nb2 + 1.0));
  const double offset = single ? 1.0 : 2.0;
  if (up >= down) return kGridCap;
  // pi(s) / pi(s-1) = (R + up (s - 1 + offset)) / (down s)
  std::vector<double> log_pi{0.0};
  for (int s = 1;; ++s) {
    const double birth = p.R + up * (s - 1 + offset);
    log_pi.push_back(log_pi.back() + std::log(birth / (down * s)));
    if (s > 4 * kGridCap && birth < 0.5 * down * s) break;
  }
  const double lmax = *std::max_element(log_pi.begin(), log_pi.end());
  std::vector<double> tail(log_pi.size() + 1, 0.0);
  for (std::size_t s = log_pi.size(); s-- > 0;) tail[s] = tail[s + 1] + std::exp(log_pi[s] - lmax);
  const double z = tail[0];
  for (int n = kGridFloor; n <= kGridCap; ++n) {
    const double beyond = tail[static_cast<std::size_t>(n) + 1] / z;
    const double edge = tail[static_cast<std::size_t>(n)] / z;
    if (beyond < kTailTolerance && edge * edge_outflow(p, n) < kEdgeLeakTolerance * p.gamma1)
      return n;
  }
  return kGridCap;
}

}  // namespace

JointDist JointDist::point_mass(const FockGrid& g, int n1, int n2) {
  if (!g.contains(n1, n2)) throw ConfigError("point mass outside the grid");
  JointDist d(g);
  d.p(n1, n2) = 1.0;
  return d;
}

void JointDist::normalize() {
  const double t = total();
  if (!(t > 0.0)) throw NumericalError("cannot normalize an empty distribution");
  p /= t;
}

Eigen::VectorXd JointDist::total_photon_distribution() const {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(grid.n1_max + grid.n2_max + 1);
  for (Eigen::Index n2 = 0; n2 < p.cols(); ++n2)
    for (Eigen::Index n1 = 0; n1 < p.rows(); ++n1) q(n1 + n2) += p(n1, n2);
  return q;
}

double tv_distance(const Eigen::Ref<const Eigen::VectorXd>& p,
                   const Eigen::Ref<const Eigen::VectorXd>& q) {
  const Eigen::Index common = std::min(p.size(), q.size());
  double sum = (p.head(common) - q.head(common)).cwiseAbs().sum();
  sum += p.tail(p.size() - common).cwiseAbs().sum();
  sum += q.tail(q.size() - common).cwiseAbs().sum();
  return 0.5 * sum;
}

double tv_distance(const JointDist& a, const JointDist& b) {
  const Eigen::Index rows = std::max(a.p.rows(), b.p.rows());
  const Eigen::Index cols = std::max(a.p.cols(), b.p.cols());
  Eigen::MatrixXd pa = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::MatrixXd pb = Eigen::MatrixXd::Zero(rows, cols);
  pa.topLeftCorner(a.p.rows(), a.p.cols()) = a.p;
  pb.topLeftCorner(b.p.rows(), b.p.cols()) = b.p;
  return 0.5 * (pa - pb).cwiseAbs().sum();
}

double analytic_outside_mass(const ModelParams& params, const FockGrid& grid) {
  validate(params);
  return outside_mass(balance_weights(params, required_length(grid)), grid);
}

JointDist steady_joint_dist(const ModelParams& params, const FockGrid& grid) {
  validate(params);
  const BalanceWeights bw = balance_weights(params, required_length(grid));
  const double tail = outside_mass(bw, grid);
  if (!(tail < kTailTolerance)) {
    throw NumericalError("grid truncation inadequate: tail mass " + std::to_string(tail) +
                         " outside n1_max=" + std::to_string(grid.n1_max) +
                         ", n2_max=" + std::to_string(grid.n2_max));
  }
  JointDist dist(grid);
  for (int n2 = 0; n2 <= grid.n2_max; ++n2) {
    for (int n1 = 0; n1 <= grid.n1_max; ++n1) {
      if (bw.two_mode) {
        dist.p(n1, n2) = std::exp(bw.log_w[static_cast<std::size_t>(n1 + n2)] - bw.log_max);
      } else if (n2 == 0) {
        dist.p(n1, n2) = std::exp(bw.log_w[static_cast<std::size_t>(n1)] - bw.log_max);
      }
    }
  }
  dist.normalize();
  return dist;
}

FockGrid default_grid(const ModelParams& params) {
  validate(params);
  FockGrid grid;
  const bool exact = params.spread == 0.0 && (params.symmetric() || params.single_mode());
  if (exact) {
    const BalanceWeights bw = balance_weights(params, 2 * kGridCap + 1);
    int chosen = kGridCap;
    for (int n = kGridFloor; n <= kGridCap; ++n) {
      const int n2 = params.single_mode() ? 0 : n;
      const FockGrid trial{n, n2};
      const FockGrid inner{n - 1, std::max(n2 - 1, 0)};
      if (outside_mass(bw, trial) < kTailTolerance &&
          outside_mass(bw, inner) * edge_outflow(params, n) <
              kEdgeLeakTolerance * params.gamma1) {
        chosen = n;
        break;
      }
    }
    grid.n1_max = chosen;
  } else {
    grid.n1_max = dominating_cutoff(params);
  }
  grid.n2_max = params.single_mode() ? 0 : grid.n1_max;
  return grid;
}

Eigen::VectorXd marginal(const JointDist& dist, int mode) {
  if (mode == 1) return dist.p.rowwise().sum();
  if (mode == 2) return dist.p.colwise().sum().transpose();
  throw ConfigError("mode must be 1 or 2");
}

double Moments::fano() const {
  if (mean == 0.0) throw NumericalError("Fano factor undefined: mean photon number is zero");
  return variance() / mean;
}

Moments moments(const Eigen::Ref<const Eigen::VectorXd>& marg) {
  const Eigen::ArrayXd n = Eigen::ArrayXd::LinSpaced(marg.size(), 0.0, marg.size() - 1.0);
  const Eigen::ArrayXd pn = marg.array();
  return {(n * pn).sum(), (n * n * pn).sum()};
}

double g2_zero(const Eigen::Ref<const Eigen::VectorXd>& marg) {
  const Moments m = moments(marg);
  if (m.mean == 0.0)
    throw NumericalError("g2(0) diverges: the cavity has no photons");
  return (m.second_moment - m.mean) / (m.mean * m.mean);
}

std::vector<double> trapping_points(int total_photons, int k_max) {
  if (total_photons < 0) throw ConfigError("total photon number must be nonnegative");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(k_max, 0)));
  const double root = std::sqrt(static_cast<double>(total_photons + 2));
  for (int k = 1; k <= k_max; ++k) out.push_back(k * std::numbers::pi / root);
  return out;
}

namespace {

struct RayGeometry {
  double lambda_sq0;  // lambda^2 at s = 0
  double lambda_sq1;  // d(lambda^2)/ds
  double loss_slope;  // d(loss)/ds
};

RayGeometry ray(const ModelParams& p, double f) {
  return {p.g1 * p.g1 + p.g2 * p.g2, p.g1 * p.g1 * f + p.g2 * p.g2 * (1.0 - f),
          p.gamma1 * f + p.gamma2 * (1.0 - f)};
}

double residual_slope(const ModelParams& p, const RayGeometry& r, double s) {
  const double lambda = std::sqrt(r.lambda_sq0 + r.lambda_sq1 * s);
  if (lambda == 0.0) return -r.loss_slope;
  const double dlambda = r.lambda_sq1 / (2.0 * lambda);
  return p.R * std::sin(2.0 * p.tau_int * lambda) * p.tau_int * dlambda - r.loss_slope;
}

}  // namespace

double semiclassical_residual(const ModelParams& p, double s, double f) {
  const RayGeometry r = ray(p, f);
  const double lambda = std::sqrt(r.lambda_sq0 + r.lambda_sq1 * s);
  return p.R * pump_sin2(p.tau_int * lambda) - r.loss_slope * s;
}

SemiclassicalRoots semiclassical_roots(const ModelParams& params, double s_max,
                                       double mode1_fraction) {
  validate(params);
  if (!(s_max > 0.0)) throw ConfigError("s_max must be positive");
  if (!(mode1_fraction >= 0.0 && mode1_fraction <= 1.0))
    throw ConfigError("mode1_fraction must lie in [0, 1]");
  const RayGeometry geo = ray(params, mode1_fraction);
  auto h = [&](double s) { return semiclassical_residual(params, s, mode1_fraction); };

  SemiclassicalRoots roots;
  auto add = [&](double s) {
    roots.push_back({s, residual_slope(params, geo, s) < 0.0});
  };

  // Step small against both the sin^2 oscillation and the scale of s.
  const double dphase_ds = geo.lambda_sq1 > 0.0
                               ? params.tau_int * geo.lambda_sq1 / (2.0 * std::sqrt(geo.lambda_sq0))
                               : 0.0;
  double step = std::min(0.01, s_max / 1000.0);
  if (dphase_ds > 0.0) step = std::min(step, 0.01 / dphase_ds);

  double s0 = 0.0, h0 = h(0.0);
  if (h0 == 0.0) add(0.0);
  const auto n_steps = static_cast<long>(std::ceil(s_max / step));
  for (long i = 1; i <= n_steps; ++i) {
    const double s1 = std::min(s_max, static_cast<double>(i) * step);
    const double h1 = h(s1);
    if (h1 == 0.0) {
      add(s1);
    } else if (h0 != 0.0 && ((h0 > 0.0) != (h1 > 0.0))) {
      double a = s0, b = s1, ha = h0;
      while (b - a > 1e-9) {
        const double mid = 0.5 * (a + b);
        const double hm = h(mid);
        if ((hm > 0.0) == (ha > 0.0)) {
          a = mid;
          ha = hm;
        } else {
          b = mid;
        }
      }
      const double root = 0.5 * (a + b);
      roots.push_back({root, h0 > 0.0 && h1 < 0.0});
    }
    s0 = s1;
    h0 = h1;
  }
  return roots;
}

TrappingCorrelation trapping_g2_formula(const ModelParams& params, int mode_count) {
  validate(params);
  const double gt = params.g1 * params.tau_int;
  if (mode_count == 1) return {params.R * pump_sin2(gt) + params.gamma1};
  if (mode_count == 2) return {params.R * pump_sin2(gt * std::numbers::sqrt2) + params.gamma1};
  throw ConfigError("mode_count must be 1 or 2");
}

double resonance_fluorescence_g2(double rabi, double linewidth, double tau) {
  const double disc = rabi * rabi - linewidth * linewidth / 16.0;
  double c = 1.0, s_over_mu = tau;
  if (disc > 0.0) {
    const double mu = std::sqrt(disc);
    c = std::cos(mu * tau);
    s_over_mu = std::sin(mu * tau) / mu;
  } else if (disc < 0.0) {
    const double kappa = std::sqrt(-disc);
    c = std::cosh(kappa * tau);
    s_over_mu = std::sinh(kappa * tau) / kappa;
  }
  return 1.0 - (c + 0.75 * linewidth * s_over_mu) * std::exp(-0.75 * linewidth * tau);
}

}  // namespace microlaser
