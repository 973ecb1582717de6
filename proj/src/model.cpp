#include "microlaser/model.hpp"

#include "microlaser/error.hpp"

#include <string>

namespace microlaser {

namespace {

void require(bool ok, const char* message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

const ModelParams& validate(const ModelParams& p) {
  // NaN fails every comparison below, so it is rejected too.
  require(p.g1 >= 0.0, "g1 must be nonnegative");
  require(p.g2 >= 0.0, "g2 must be nonnegative");
  require(p.gamma1 > 0.0, "gamma1 must be positive");
  require(p.gamma2 > 0.0, "gamma2 must be positive");
  require(p.nb1 >= 0.0, "nb1 must be nonnegative");
  require(p.nb2 >= 0.0, "nb2 must be nonnegative");
  require(p.R > 0.0, "R must be positive");
  require(p.tau_int > 0.0, "tau_int must be positive");
  require(p.spread >= 0.0, "spread must be nonnegative");
  require(std::isfinite(p.g1) && std::isfinite(p.g2) && std::isfinite(p.gamma1) &&
              std::isfinite(p.gamma2) && std::isfinite(p.nb1) && std::isfinite(p.nb2) &&
              std::isfinite(p.R) && std::isfinite(p.tau_int) && std::isfinite(p.spread),
          "parameters must be finite");
  return p;
}

double pump_theta(const ModelParams& p) {
  if (!p.symmetric()) throw ConfigError("pump_theta requires symmetric parameters");
  return p.g1 * p.tau_int * std::sqrt(p.R / p.gamma1);
}

ModelParams single_mode_preset(double g, double gamma, double nb, double R, double tau_int) {
  ModelParams p;
  p.g1 = g;
  p.g2 = 0.0;
  p.gamma1 = gamma;
  p.gamma2 = gamma;
  p.nb1 = nb;
  p.nb2 = 0.0;
  p.R = R;
  p.tau_int = tau_int;
  validate(p);
  return p;
}

ModelParams symmetric_preset(double g, double gamma, double nb, double R, double tau_int,
                             double spread) {
  ModelParams p;
  p.g1 = p.g2 = g;
  p.gamma1 = p.gamma2 = gamma;
  p.nb1 = p.nb2 = nb;
  p.R = R;
  p.tau_int = tau_int;
  p.spread = spread;
  validate(p);
  return p;
}

const VelocityModel& validate(const VelocityModel& vm) {
  require(vm.v0 > 0.0, "v0 must be positive");
  require(vm.spread >= 0.0, "spread must be nonnegative");
  require(vm.v_min_fraction > 0.0 && vm.v_min_fraction < 1.0,
          "v_min_fraction must lie in (0, 1)");
  return vm;
}

VelocityModel velocity_model(const ModelParams& params) {
  VelocityModel vm;
  vm.spread = params.spread;
  return vm;
}

}  // namespace microlaser
