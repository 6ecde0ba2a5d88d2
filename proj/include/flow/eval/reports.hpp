#pragma once

#include <filesystem>
#include <functional>

#include "flow/eval/metrics.hpp"

namespace flow {

// One table row; runtime columns stay empty (NaN) unless a benchmark ran.
struct MethodReportRow {
  std::string method;
  ThreewayReport report;
  double runtime_ms_mean = std::numeric_limits<double>::quiet_NaN();
  double runtime_ms_std = std::numeric_limits<double>::quiet_NaN();
};

// method,threeway_epe,fg_dynamic,fg_static,bg,runtime_ms_mean,runtime_ms_std
void write_report_csv(const std::filesystem::path& path, const std::vector<MethodReportRow>& rows);
std::vector<MethodReportRow> read_report_csv(const std::filesystem::path& path);

struct VarianceReport {
  std::vector<std::pair<uint64_t, ThreewayReport>> per_seed;
  ThreewayReport mean;             // column-wise arithmetic mean
  double threeway_spread = 0.0;    // max - min over seeds
};

// Re-trains/evaluates once per seed via the supplied closure.
VarianceReport variance_report(const std::function<ThreewayReport(uint64_t seed)>& run,
                               const std::vector<uint64_t>& seeds);

struct ScalingPoint {
  double fraction = 0.0;
  size_t n_train = 0;
  ThreewayReport report;
};

// Fractions must be sorted, in (0,1]. The closure trains on the prefix
// subset for one fraction and evaluates on the shared held-out split.
std::vector<ScalingPoint> scaling_curve(
    const std::vector<double>& fractions,
    const std::function<std::pair<size_t, ThreewayReport>(double fraction)>& run);

void write_scaling_csv(const std::filesystem::path& path, const std::vector<ScalingPoint>& points);

// Least-squares slope of log10(threeway_epe) against log10(fraction).
double loglog_slope(const std::vector<ScalingPoint>& points);

}  // namespace flow
