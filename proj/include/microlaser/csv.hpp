#pragma once

#include "microlaser/correlation.hpp"
#include "microlaser/qtm.hpp"

#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace microlaser {

/// Decimal text with 17 significant digits.
std::string format_number(double value);

using MetaLines = std::vector<std::pair<std::string, std::string>>;

void write_meta(std::ostream& out, const MetaLines& meta);

/// `tau,g2,pair_count,stderr` with `# key: value` lines first.
void write_correlation_csv(std::ostream& out, const CorrelationSeries& series,
                           const MetaLines& meta = {});

/// Generic numeric table: header row then one row per entry of `rows`.
void write_table_csv(std::ostream& out, std::span<const std::string> header,
                     const std::vector<std::vector<double>>& rows, const MetaLines& meta = {});

/// `traj_id,time,event_kind,n1,n2`, one line per event of each full record.
void write_trajectories_csv(std::ostream& out, std::span<const TrajectoryRecord> records);

}  // namespace microlaser
