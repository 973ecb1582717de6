#include "microlaser/correlation.hpp"

#include "microlaser/error.hpp"
#include "microlaser/qtm.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

namespace microlaser {

namespace {

std::size_t bin_count(double bin_width, double tau_max) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw ConfigError("bin_width must be positive");
  }
  if (!(tau_max >= bin_width) || !std::isfinite(tau_max)) {
    throw ConfigError("tau_max must be at least one bin width");
  }
  const double ratio = tau_max / bin_width;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * ratio) {
    throw ConfigError("tau_max must be a whole number of bin widths");
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

PairCorrelator::PairCorrelator(double bin_width, double tau_max)
    : bin_width_(bin_width), tau_max_(tau_max), n_bins_(bin_count(bin_width, tau_max)),
      total_counts_(n_bins_, 0) {}

void PairCorrelator::add_stream(std::span<const double> times, double t_total) {
  if (!(t_total > tau_max_)) throw ConfigError("observation time must exceed tau_max");
  if (!std::is_sorted(times.begin(), times.end())) {
    throw ConfigError("event times must be sorted");
  }
  if (!times.empty() && (times.front() < 0.0 || times.back() > t_total)) {
    throw ConfigError("event times must lie in [0, t_total]");
  }
  std::vector<std::int64_t> counts(n_bins_, 0);
  const double reach = static_cast<double>(n_bins_) * bin_width_;
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t j = i + 1; j < times.size(); ++j) {
      const double d = times[j] - times[i];
      if (d >= reach) break;
      const auto b = std::min(n_bins_ - 1, static_cast<std::size_t>(d / bin_width_));
      ++counts[b];
    }
  }
  for (std::size_t b = 0; b < n_bins_; ++b) total_counts_[b] += counts[b];
  stream_counts_.push_back(std::move(counts));
  events_.push_back(static_cast<std::int64_t>(times.size()));
  durations_.push_back(t_total);
}

CorrelationSeries PairCorrelator::result() const {
  std::int64_t n_events = 0;
  double duration = 0.0;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    n_events += events_[i];
    duration += durations_[i];
  }
  if (n_events < 2) throw NumericalError("insufficient events for a pair correlation");

  CorrelationSeries out;
  out.meta = {bin_width_, tau_max_, n_events, duration, static_cast<std::int64_t>(events_.size())};
  out.tau_centers.resize(n_bins_);
  out.g2.resize(n_bins_);
  out.pair_counts = total_counts_;
  out.std_error.resize(n_bins_);

  // Sum over streams of the window length available to a pair at lag tau.
  auto exposure = [&](double tau, std::size_t skip) {
    double sum = 0.0;
    for (std::size_t i = 0; i < durations_.size(); ++i) {
      if (i != skip) sum += std::max(durations_[i] - tau, 0.0);
    }
    return sum;
  };
  const std::size_t none = durations_.size();
  const double rate = static_cast<double>(n_events) / duration;
  for (std::size_t b = 0; b < n_bins_; ++b) {
    const double tau = (static_cast<double>(b) + 0.5) * bin_width_;
    const double norm = rate * rate * bin_width_ * exposure(tau, none);
    out.tau_centers[b] = tau;
    out.g2[b] = static_cast<double>(total_counts_[b]) / norm;
    out.std_error[b] = std::sqrt(static_cast<double>(total_counts_[b])) / norm;
  }
  const std::size_t m = events_.size();
  if (m < 2) return out;

  // Leave-one-stream-out jackknife.
  std::vector<double> exposure_all(n_bins_);
  for (std::size_t b = 0; b < n_bins_; ++b) exposure_all[b] = exposure(out.tau_centers[b], none);
  std::vector<double> sum(n_bins_, 0.0);
  std::vector<double> sum_sq(n_bins_, 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::int64_t n_rest = n_events - events_[i];
    const double d_rest = duration - durations_[i];
    if (n_rest < 2 || !(d_rest > 0.0)) continue;
    const double r = static_cast<double>(n_rest) / d_rest;
    for (std::size_t b = 0; b < n_bins_; ++b) {
      const double e = exposure_all[b] - std::max(durations_[i] - out.tau_centers[b], 0.0);
      const double g = static_cast<double>(total_counts_[b] - stream_counts_[i][b]) /
                       (r * r * bin_width_ * e);
      sum[b] += g;
      sum_sq[b] += g * g;
    }
    ++used;
  }
  if (used < 2) return out;
  const double k = static_cast<double>(used);
  for (std::size_t b = 0; b < n_bins_; ++b) {
    const double mean = sum[b] / k;
    const double var = std::max(sum_sq[b] / k - mean * mean, 0.0);
    out.std_error[b] = std::sqrt((k - 1.0) * var);
  }
  return out;
}

CorrelationSeries leak_pair_correlation(std::span<const double> leak_times, double t_total,
                                        double bin_width, double tau_max) {
  if (leak_times.size() < 2) throw NumericalError("insufficient events for a pair correlation");
  PairCorrelator pc(bin_width, tau_max);
  pc.add_stream(leak_times, t_total);
  return pc.result();
}

std::vector<double> target_stream(const TrajectoryRecord& record, Target target, double burn_in) {
  if (!(burn_in >= 0.0) || burn_in >= record.t_final) {
    throw ConfigError("burn_in must lie in [0, t_final)");
  }
  std::vector<double> merged;
  switch (target) {
    case Target::Mode1: merged = record.leak_times_1; break;
    case Target::Mode2: merged = record.leak_times_2; break;
    case Target::Total:
      merged.reserve(record.leak_times_1.size() + record.leak_times_2.size());
      std::merge(record.leak_times_1.begin(), record.leak_times_1.end(),
                 record.leak_times_2.begin(), record.leak_times_2.end(),
                 std::back_inserter(merged));
      break;
  }
  std::vector<double> out;
  out.reserve(merged.size());
  for (double t : merged) {
    if (t >= burn_in) out.push_back(t - burn_in);
  }
  return out;
}

CorrelationSeries pooled_correlation(std::span<const TrajectoryRecord> records, Target target,
                                     double bin_width, double tau_max, double burn_in) {
  if (records.empty()) throw ConfigError("no trajectories to correlate");
  PairCorrelator pc(bin_width, tau_max);
  for (const TrajectoryRecord& r : records) {
    pc.add_stream(target_stream(r, target, burn_in), r.t_final - burn_in);
  }
  return pc.result();
}

std::vector<double> fine_tau_grid(double bin_width, double tau_max, int per_bin) {
  if (per_bin < 1) throw ConfigError("per_bin must be at least 1");
  const std::size_t n_bins = bin_count(bin_width, tau_max);
  const std::size_t n = n_bins * static_cast<std::size_t>(per_bin);
  std::vector<double> out(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    out[i] = bin_width * static_cast<double>(i) / per_bin;
  }
  return out;
}

CorrelationSeries bin_average(const CorrelationSeries& fine, double bin_width, double tau_max) {
  const std::size_t n_bins = bin_count(bin_width, tau_max);
  const std::size_t n = fine.size();
  if (n < 2 || (n - 1) % n_bins != 0) {
    throw ConfigError("fine series does not sample every bin edge");
  }
  const std::size_t k = (n - 1) / n_bins;
  for (std::size_t i = 0; i < n; ++i) {
    const double expected = bin_width * static_cast<double>(i) / static_cast<double>(k);
    if (std::abs(fine.tau_centers[i] - expected) > 1e-9 * std::max(1.0, tau_max)) {
      throw ConfigError("fine series does not sample every bin edge");
    }
  }
  CorrelationSeries out;
  out.meta = fine.meta;
  out.meta.bin_width = bin_width;
  out.meta.tau_max = tau_max;
  out.tau_centers.resize(n_bins);
  out.g2.resize(n_bins);
  out.pair_counts.assign(n_bins, 0);
  out.std_error.assign(n_bins, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t first = b * k;
    double acc = 0.5 * (fine.g2[first] + fine.g2[first + k]);
    for (std::size_t i = 1; i < k; ++i) acc += fine.g2[first + i];
    out.tau_centers[b] = (static_cast<double>(b) + 0.5) * bin_width;
    out.g2[b] = acc / static_cast<double>(k);
  }
  return out;
}

}  // namespace microlaser
