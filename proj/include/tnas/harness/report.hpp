#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tnas/harness/records.hpp"

namespace tnas {

struct MethodSummary {
  std::string method;
  std::int64_t n = 0;
  double mean = 0.0;
  /// Sample standard deviation; NaN for a single value.
  double std = 0.0;
  /// test when every final row has one, val otherwise
  std::string metric;
};

/// Best-so-far val metric of one run against epoch (or evaluation index).
struct CurveSeries {
  std::string method;
  std::string run_id;
  std::vector<std::int64_t> step;
  std::vector<double> best;
};

/// Architecture logits of one dim across the recorded epochs of one run.
struct TrajectorySeries {
  std::string method;
  std::string run_id;
  std::string dim;
  std::vector<std::int64_t> epoch;
  std::vector<std::vector<double>> alphas;
};

struct Report {
  std::string space;
  std::vector<MethodSummary> summaries;
  std::vector<CurveSeries> curves;
  std::vector<TrajectorySeries> trajectories;
};

/// Aggregates rows from one space. `final` rows feed the summary table,
/// `epoch` and `eval` rows the best-so-far curves, epoch rows with alphas
/// the trajectories. Throws ConsistencyError when rows mix spaces and
/// PreconditionError when there are no rows.
Report build_report(const std::vector<ResultRecord>& rows);
/// Reads every file (at least one) and builds the report.
Report build_report(const std::vector<std::string>& paths);

std::string format_text(const Report& r);
/// One JSON object per line, tagged by "type": summary | curve | trajectory.
std::string format_records(const Report& r);

}  // namespace tnas
