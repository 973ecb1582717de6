#include "microlaser/qtm.hpp"

#include "microlaser/error.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace microlaser {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Emit1: return "emit1";
    case EventKind::Emit2: return "emit2";
    case EventKind::Leak1: return "leak1";
    case EventKind::Leak2: return "leak2";
    case EventKind::Thermal1: return "thermal1";
    case EventKind::Thermal2: return "thermal2";
    case EventKind::AtomPass: return "atom_pass";
  }
  return "unknown";
}

std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master_seed) ^ index);
}

namespace {

struct FieldRates {
  double leak1, leak2, thermal1, thermal2;
};

FieldRates field_rates(const EngineState& s, const ModelParams& p) {
  return {p.gamma1 * (p.nb1 + 1.0) * s.n1, p.gamma2 * (p.nb2 + 1.0) * s.n2,
          p.gamma1 * p.nb1 * (s.n1 + 1.0), p.gamma2 * p.nb2 * (s.n2 + 1.0)};
}

struct AtomWeights {
  double w1, w2, lambda;
};

AtomWeights atom_weights(const EngineState& s, const ModelParams& p) {
  const double a = p.g1 * p.g1 * (s.n1 + 1.0);
  const double b = p.g2 * p.g2 * (s.n2 + 1.0);
  const double l2 = a + b;
  return {a / l2, b / l2, std::sqrt(l2)};
}

}  // namespace

double total_rate(const EngineState& state, const ModelParams& params) {
  const FieldRates f = field_rates(state, params);
  return params.R + f.leak1 + f.leak2 + f.thermal1 + f.thermal2;
}

std::array<double, kEventKinds> event_probabilities(const EngineState& state, double tau_int,
                                                    const ModelParams& params) {
  const double a = total_rate(state, params);
  const FieldRates f = field_rates(state, params);
  const AtomWeights w = atom_weights(state, params);
  const double s2 = pump_sin2(w.lambda * tau_int);
  const double atom = params.R / a;
  return {atom * s2 * w.w1, atom * s2 * w.w2, f.leak1 / a,      f.leak2 / a,
          f.thermal1 / a,   f.thermal2 / a,   atom * (1.0 - s2)};
}

EventKind sample_event(const EngineState& state, const ModelParams& params,
                       const VelocityModel& velocity, Rng& rng) {
  const FieldRates f = field_rates(state, params);
  const double a = params.R + f.leak1 + f.leak2 + f.thermal1 + f.thermal2;
  double x = uniform_open_zero(rng) * a;
  if (x <= params.R) {
    const double tau = sample_interaction_time(velocity, params.tau_int, rng);
    const AtomWeights w = atom_weights(state, params);
    const double s2 = pump_sin2(w.lambda * tau);
    const double y = uniform_open_zero(rng);
    if (y <= s2 * w.w1) return EventKind::Emit1;
    if (y <= s2) return EventKind::Emit2;
    return EventKind::AtomPass;
  }
  x -= params.R;
  if (x <= f.leak1) return EventKind::Leak1;
  x -= f.leak1;
  if (x <= f.leak2) return EventKind::Leak2;
  x -= f.leak2;
  if (x <= f.thermal1 || f.thermal2 == 0.0) return EventKind::Thermal1;
  return EventKind::Thermal2;
}

EngineState apply(EngineState state, EventKind kind) {
  switch (kind) {
    case EventKind::Emit1:
    case EventKind::Thermal1: ++state.n1; break;
    case EventKind::Emit2:
    case EventKind::Thermal2: ++state.n2; break;
    case EventKind::Leak1: --state.n1; break;
    case EventKind::Leak2: --state.n2; break;
    case EventKind::AtomPass: break;
  }
  return state;
}

namespace {

/// Adds the time spent in each state after `from`.
class Occupancy {
public:
  Occupancy(double from, Eigen::MatrixXd& out) : from_(from), out_(out) {}

  void hold(const EngineState& s, double t0, double t1) {
    const double a = std::max(t0, from_);
    if (t1 > a) out_(s.n1, s.n2) += t1 - a;
  }

private:
  double from_;
  Eigen::MatrixXd& out_;
};

template <class OnHold>
TrajectoryRecord simulate(const ModelParams& params, const FockGrid& grid, double t_final,
                          std::uint64_t seed, RecordLevel level, const VelocityModel& velocity,
                          OnHold&& on_hold) {
  TrajectoryRecord rec;
  rec.seed = seed;
  rec.t_final = t_final;
  Rng rng(seed);
  EngineState s;
  for (;;) {
    const double dt = sample_waiting_time(total_rate(s, params), rng);
    if (s.t + dt > t_final) {
      on_hold(s, s.t, t_final);
      break;
    }
    on_hold(s, s.t, s.t + dt);
    s.t += dt;
    const EventKind kind = sample_event(s, params, velocity, rng);
    const EngineState next = apply(s, kind);
    if (!grid.contains(next.n1, next.n2)) {
      throw NumericalError("grid overflow: trajectory reached (" + std::to_string(next.n1) + ", " +
                           std::to_string(next.n2) + "); enlarge the grid");
    }
    s = next;
    ++rec.n_events;
    rec.max_total = std::max(rec.max_total, s.n1 + s.n2);
    if (level == RecordLevel::Full) rec.events.push_back({s.t, kind, s.n1, s.n2});
    if (kind == EventKind::Leak1) {
      if (level != RecordLevel::Summary) rec.leak_times_1.push_back(s.t);
    } else if (kind == EventKind::Leak2) {
      if (level != RecordLevel::Summary) rec.leak_times_2.push_back(s.t);
    }
  }
  s.t = t_final;
  rec.final = s;
  return rec;
}

void check_run(const ModelParams& params, const FockGrid& grid, double t_final) {
  validate(params);
  if (!(t_final > 0.0) || !std::isfinite(t_final)) {
    throw ConfigError("t_final must be positive and finite");
  }
  if (grid.n1_max < 0 || grid.n2_max < 0) throw ConfigError("grid bounds must be nonnegative");
}

}  // namespace

TrajectoryRecord run_trajectory(const ModelParams& params, const FockGrid& grid, double t_final,
                                std::uint64_t seed, const TrajectoryOptions& options) {
  check_run(params, grid, t_final);
  const VelocityModel vm = validate(options.velocity.value_or(velocity_model(params)));
  return simulate(params, grid, t_final, seed, options.level, vm,
                  [](const EngineState&, double, double) {});
}

JointDist time_averaged_dist(const TrajectoryRecord& record, const FockGrid& grid,
                             double burn_in) {
  if (!(burn_in >= 0.0) || burn_in >= record.t_final) {
    throw ConfigError("burn_in must lie in [0, t_final)");
  }
  if (record.n_events > 0 && record.events.empty()) {
    throw ConfigError("time averaging needs a full trajectory record");
  }
  JointDist out(grid);
  Occupancy occ(burn_in, out.p);
  EngineState s;
  for (const Event& e : record.events) {
    if (!grid.contains(e.n1, e.n2)) throw ConfigError("record does not fit the grid");
    occ.hold(s, s.t, e.time);
    s = {e.n1, e.n2, e.time};
  }
  occ.hold(s, s.t, record.t_final);
  out.p /= record.t_final - burn_in;
  return out;
}

std::vector<double> EnsembleResult::pooled_leak_times(int mode) const {
  if (mode != 1 && mode != 2) throw ConfigError("mode must be 1 or 2");
  std::vector<double> out;
  for (const TrajectoryRecord& r : records) {
    const auto& src = mode == 1 ? r.leak_times_1 : r.leak_times_2;
    out.insert(out.end(), src.begin(), src.end());
  }
  return out;
}

EnsembleResult ensemble_run(const ModelParams& params, const FockGrid& grid, double t_final,
                            std::int64_t n_traj, std::uint64_t master_seed,
                            const EnsembleOptions& options) {
  check_run(params, grid, t_final);
  if (n_traj < 1) throw ConfigError("n_traj must be at least 1");
  const VelocityModel vm = validate(options.velocity.value_or(velocity_model(params)));
  const bool averaging = options.time_average_burn_in.has_value();
  const double burn_in = options.time_average_burn_in.value_or(0.0);
  if (averaging && (!(burn_in >= 0.0) || burn_in >= t_final)) {
    throw ConfigError("burn_in must lie in [0, t_final)");
  }

  // Fixed blocks reduced in index order keep floating-point sums independent
  // of scheduling.
  constexpr std::int64_t kBlock = 64;
  const std::int64_t n_blocks = (n_traj + kBlock - 1) / kBlock;
  std::vector<Eigen::MatrixXd> block_occupancy(averaging ? n_blocks : 0);

  EnsembleResult res;
  res.grid = grid;
  res.n_traj = n_traj;
  res.t_final = t_final;
  res.summaries.resize(static_cast<std::size_t>(n_traj));
  if (options.level != RecordLevel::Summary) res.records.resize(static_cast<std::size_t>(n_traj));

  std::atomic<std::int64_t> next_block{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<bool> failed{false};

  auto worker = [&] {
    for (;;) {
      const std::int64_t b = next_block.fetch_add(1);
      if (b >= n_blocks || failed.load()) return;
      try {
        Eigen::MatrixXd occ;
        if (averaging) occ = Eigen::MatrixXd::Zero(grid.rows(), grid.cols());
        const std::int64_t end = std::min(n_traj, (b + 1) * kBlock);
        for (std::int64_t i = b * kBlock; i < end; ++i) {
          const std::uint64_t seed = trajectory_seed(master_seed, static_cast<std::uint64_t>(i));
          Occupancy acc(burn_in, occ);
          TrajectoryRecord rec =
              averaging ? simulate(params, grid, t_final, seed, options.level, vm,
                                   [&acc](const EngineState& s, double t0, double t1) {
                                     acc.hold(s, t0, t1);
                                   })
                        : simulate(params, grid, t_final, seed, options.level, vm,
                                   [](const EngineState&, double, double) {});
          const auto k = static_cast<std::size_t>(i);
          TrajectorySummary& sum = res.summaries[k];
          sum.seed = seed;
          sum.final = rec.final;
          sum.n_events = rec.n_events;
          sum.max_total = rec.max_total;
          if (options.level == RecordLevel::Full) {
            for (const Event& e : rec.events) {
              sum.n_leak1 += e.kind == EventKind::Leak1;
              sum.n_leak2 += e.kind == EventKind::Leak2;
            }
          } else {
            sum.n_leak1 = static_cast<std::int64_t>(rec.leak_times_1.size());
            sum.n_leak2 = static_cast<std::int64_t>(rec.leak_times_2.size());
          }
          if (options.level != RecordLevel::Summary) res.records[k] = std::move(rec);
        }
        if (averaging) block_occupancy[static_cast<std::size_t>(b)] = std::move(occ);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        failed = true;
        return;
      }
    }
  };

  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : options.threads;
  threads = static_cast<unsigned>(std::min<std::int64_t>(threads, n_blocks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  res.counts = decltype(res.counts)::Zero(grid.rows(), grid.cols());
  for (const TrajectorySummary& s : res.summaries) ++res.counts(s.final.n1, s.final.n2);
  res.histogram = JointDist(grid);
  res.histogram.p = res.counts.cast<double>() / static_cast<double>(n_traj);
  if (averaging) {
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(grid.rows(), grid.cols());
    for (const Eigen::MatrixXd& m : block_occupancy) total += m;
    total /= static_cast<double>(n_traj) * (t_final - burn_in);
    res.time_averaged = JointDist(grid);
    res.time_averaged->p = std::move(total);
  }
  return res;
}

}  // namespace microlaser
