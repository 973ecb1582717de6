#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace microlaser {

struct TrajectoryRecord;

/// Which photon stream (or cavity observable) a correlation refers to.
enum class Target { Mode1, Mode2, Total };

/// g2(tau) on a tau axis, with pair counts and standard errors. Series from
/// the deterministic regression method carry zero counts and errors.
struct CorrelationSeries {
  std::vector<double> tau_centers;
  std::vector<double> g2;
  std::vector<std::int64_t> pair_counts;
  std::vector<double> std_error;

  struct Meta {
    double bin_width = 0.0;
    double tau_max = 0.0;
    std::int64_t n_events = 0;
    double observation_time = 0.0;
    std::int64_t n_streams = 0;
  } meta;

  [[nodiscard]] std::size_t size() const noexcept { return g2.size(); }
};

/// Ordered-pair correlation of one stationary event stream observed on
/// [0, t_total]. Bin j covers [j w, (j + 1) w); the count is normalized by
/// r^2 w (t_total - tau_j) with r = N / t_total, so Poisson input gives 1.
/// Standard errors are Poisson counting errors.
CorrelationSeries leak_pair_correlation(std::span<const double> leak_times, double t_total,
                                        double bin_width, double tau_max);

/// Accumulates within-stream pair counts from many independent streams
/// (trajectories) and reports the pooled estimate with leave-one-stream-out
/// jackknife errors. With a single stream it reduces to
/// leak_pair_correlation.
class PairCorrelator {
public:
  PairCorrelator(double bin_width, double tau_max);

  /// Adds one stream observed on [0, t_total]; times sorted ascending.
  void add_stream(std::span<const double> times, double t_total);

  [[nodiscard]] CorrelationSeries result() const;
  [[nodiscard]] std::size_t streams() const noexcept { return events_.size(); }
  [[nodiscard]] std::size_t bins() const noexcept { return n_bins_; }

private:
  double bin_width_;
  double tau_max_;
  std::size_t n_bins_;
  std::vector<std::int64_t> total_counts_;
  std::vector<std::vector<std::int64_t>> stream_counts_;
  std::vector<std::int64_t> events_;
  std::vector<double> durations_;
};

/// Event times of a record's target stream observed after `burn_in`,
/// shifted so the window starts at zero. Total merges both modes.
std::vector<double> target_stream(const TrajectoryRecord& record, Target target,
                                  double burn_in = 0.0);

/// Pooled correlation over trajectories; pairs never span trajectories.
CorrelationSeries pooled_correlation(std::span<const TrajectoryRecord> records, Target target,
                                     double bin_width, double tau_max, double burn_in = 0.0);

/// Averages a finely sampled series over bins [j w, (j + 1) w) with the
/// trapezoid rule. `fine` must sample each bin edge.
CorrelationSeries bin_average(const CorrelationSeries& fine, double bin_width, double tau_max);

/// Evenly spaced sample points 0, w/k, ..., tau_max covering every bin edge.
std::vector<double> fine_tau_grid(double bin_width, double tau_max, int per_bin);

}  // namespace microlaser
