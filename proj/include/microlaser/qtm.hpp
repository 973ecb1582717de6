#pragma once

#include "microlaser/analytic.hpp"
#include "microlaser/model.hpp"
#include "microlaser/velocity.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace microlaser {

/// Photon numbers of the two modes at time t.
struct EngineState {
  int n1 = 0;
  int n2 = 0;
  double t = 0.0;
};

enum class EventKind : std::uint8_t {
  Emit1,     ///< atom deposits a photon in mode 1
  Emit2,     ///< atom deposits a photon in mode 2
  Leak1,     ///< mode-1 photon leaves the cavity
  Leak2,     ///< mode-2 photon leaves the cavity
  Thermal1,  ///< thermal photon enters mode 1
  Thermal2,  ///< thermal photon enters mode 2
  AtomPass,  ///< atom crosses without emitting
};
inline constexpr std::size_t kEventKinds = 7;

std::string_view to_string(EventKind kind);

/// One jump; n1, n2 are the photon numbers just after it.
struct Event {
  double time = 0.0;
  EventKind kind = EventKind::AtomPass;
  int n1 = 0;
  int n2 = 0;
};

enum class RecordLevel {
  Summary,  ///< final state and counters only
  Leaks,    ///< plus leak times
  Full,     ///< plus every event
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  double t_final = 0.0;
  std::vector<Event> events;
  EngineState final;
  std::vector<double> leak_times_1;
  std::vector<double> leak_times_2;
  std::int64_t n_events = 0;
  int max_total = 0;  ///< largest n1 + n2 visited
};

using Rng = std::mt19937_64;

/// Seed of trajectory `index` in an ensemble; a SplitMix64 hash of both.
std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index);

/// Uniform deviate in (0, 1] from the top 53 bits of one engine draw.
inline double uniform_open_zero(Rng& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

/// Total jump rate A of state (m, n) = (n1, n2).
double total_rate(const EngineState& state, const ModelParams& params);

/// Inverse transform of p(tau) = exp(-A tau): -ln(u) / A.
inline double waiting_time(double total_rate, double u) { return -std::log(u) / total_rate; }

inline double sample_waiting_time(double total_rate, Rng& rng) {
  return waiting_time(total_rate, uniform_open_zero(rng));
}

/// Probabilities of the seven events (ordered as EventKind) for a fixed
/// interaction time. They sum to one.
std::array<double, kEventKinds> event_probabilities(const EngineState& state, double tau_int,
                                                    const ModelParams& params);

/// Draws the next event. The category is chosen first (an atom arrives with
/// weight R, field events with their rates); an arriving atom then gets its
/// own interaction time and emits into mode 1, mode 2 or passes with
/// weights sin^2 w1, sin^2 w2, cos^2.
EventKind sample_event(const EngineState& state, const ModelParams& params,
                       const VelocityModel& velocity, Rng& rng);

/// Applies a jump to the photon numbers.
EngineState apply(EngineState state, EventKind kind);

struct TrajectoryOptions {
  RecordLevel level = RecordLevel::Full;
  std::optional<VelocityModel> velocity;  ///< default: velocity_model(params)
};

/// Simulates one history from vacuum on [0, t_final]. Throws NumericalError
/// when a jump would leave the grid.
TrajectoryRecord run_trajectory(const ModelParams& params, const FockGrid& grid, double t_final,
                                std::uint64_t seed, const TrajectoryOptions& options = {});

/// Occupation-time weighted distribution of the states visited after
/// burn_in. Requires a Full record.
JointDist time_averaged_dist(const TrajectoryRecord& record, const FockGrid& grid, double burn_in);

struct EnsembleOptions {
  RecordLevel level = RecordLevel::Summary;
  std::optional<VelocityModel> velocity;
  unsigned threads = 1;  ///< 0 selects hardware concurrency
  /// When set, also accumulate the occupation-time distribution after this
  /// burn-in across all trajectories.
  std::optional<double> time_average_burn_in;
};

struct TrajectorySummary {
  std::uint64_t seed = 0;
  EngineState final;
  std::int64_t n_events = 0;
  std::int64_t n_leak1 = 0;
  std::int64_t n_leak2 = 0;
  int max_total = 0;
};

struct EnsembleResult {
  FockGrid grid;
  std::int64_t n_traj = 0;
  double t_final = 0.0;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  JointDist histogram;                          ///< normalized final-state counts
  std::optional<JointDist> time_averaged;       ///< when requested
  std::vector<TrajectorySummary> summaries;     ///< index order
  std::vector<TrajectoryRecord> records;        ///< empty at RecordLevel::Summary

  /// All leak times of one mode (1 or 2), trajectory by trajectory.
  [[nodiscard]] std::vector<double> pooled_leak_times(int mode) const;
};

/// Runs n_traj independent trajectories; trajectory i uses
/// trajectory_seed(master_seed, i). Results do not depend on `threads`.
EnsembleResult ensemble_run(const ModelParams& params, const FockGrid& grid, double t_final,
                            std::int64_t n_traj, std::uint64_t master_seed,
                            const EnsembleOptions& options = {});

}  // namespace microlaser
