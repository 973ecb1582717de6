#include "microlaser/csv.hpp"

#include <cstdio>

namespace microlaser {

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_meta(std::ostream& out, const MetaLines& meta) {
  for (const auto& [key, value] : meta) out << "# " << key << ": " << value << '\n';
}

void write_correlation_csv(std::ostream& out, const CorrelationSeries& series,
                           const MetaLines& meta) {
  write_meta(out, meta);
  out << "# bin_width: " << format_number(series.meta.bin_width) << '\n'
      << "# tau_max: " << format_number(series.meta.tau_max) << '\n'
      << "# n_events: " << series.meta.n_events << '\n'
      << "# observation_time: " << format_number(series.meta.observation_time) << '\n'
      << "# n_streams: " << series.meta.n_streams << '\n'
      << "tau,g2,pair_count,stderr\n";
  for (std::size_t j = 0; j < series.size(); ++j) {
    out << format_number(series.tau_centers[j]) << ',' << format_number(series.g2[j]) << ','
        << series.pair_counts[j] << ',' << format_number(series.std_error[j]) << '\n';
  }
}

void write_table_csv(std::ostream& out, std::span<const std::string> header,
                     const std::vector<std::vector<double>>& rows, const MetaLines& meta) {
  write_meta(out, meta);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << '\n';
  }
}

void write_trajectories_csv(std::ostream& out, std::span<const TrajectoryRecord> records) {
  out << "traj_id,time,event_kind,n1,n2\n";
  for (std::size_t id = 0; id < records.size(); ++id) {
    for (const Event& e : records[id].events) {
      out << id << ',' << format_number(e.time) << ',' << to_string(e.kind) << ',' << e.n1 << ','
          << e.n2 << '\n';
    }
  }
}

}  // namespace microlaser
