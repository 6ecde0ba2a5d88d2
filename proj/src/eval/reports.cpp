#include "flow/eval/reports.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace flow {

namespace {
std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace

void write_report_csv(const std::filesystem::path& path, const std::vector<MethodReportRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << "method,threeway_epe,fg_dynamic,fg_static,bg,runtime_ms_mean,runtime_ms_std\n";
  for (const auto& r : rows) {
    out << r.method << "," << fmt(r.report.threeway_epe) << ","
        << (r.report.n_fg_dynamic ? fmt(r.report.fg_dynamic_epe) : "") << ","
        << (r.report.n_fg_static ? fmt(r.report.fg_static_epe) : "") << ","
        << (r.report.n_bg ? fmt(r.report.bg_epe) : "") << "," << fmt(r.runtime_ms_mean) << ","
        << fmt(r.runtime_ms_std) << "\n";
  }
  out.close();
  if (!out) throw std::runtime_error("report write failed: " + path.string());
}

std::vector<MethodReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty report: " + path.string());
  std::vector<MethodReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    fields.resize(7);
    MethodReportRow r;
    r.method = fields[0];
    auto num = [](const std::string& s) {
      return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
    };
    r.report.threeway_epe = num(fields[1]);
    r.report.fg_dynamic_epe = num(fields[2]);
    r.report.fg_static_epe = num(fields[3]);
    r.report.bg_epe = num(fields[4]);
    r.report.n_fg_dynamic = fields[2].empty() ? 0 : 1;  // presence only
    r.report.n_fg_static = fields[3].empty() ? 0 : 1;
    r.report.n_bg = fields[4].empty() ? 0 : 1;
    r.runtime_ms_mean = num(fields[5]);
    r.runtime_ms_std = num(fields[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

VarianceReport variance_report(const std::function<ThreewayReport(uint64_t seed)>& run,
                               const std::vector<uint64_t>& seeds) {
  if (seeds.size() < 2) throw std::invalid_argument("variance_report: need at least 2 seeds");
  VarianceReport out;
  for (uint64_t seed : seeds) {
    try {
      out.per_seed.emplace_back(seed, run(seed));
    } catch (const std::exception& e) {
      throw std::runtime_error("variance_report: seed " + std::to_string(seed) +
                               " failed: " + e.what());
    }
  }
  const double n = static_cast<double>(out.per_seed.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [seed, r] : out.per_seed) {
    out.mean.threeway_epe += r.threeway_epe / n;
    out.mean.fg_dynamic_epe += r.fg_dynamic_epe / n;
    out.mean.fg_static_epe += r.fg_static_epe / n;
    out.mean.bg_epe += r.bg_epe / n;
    out.mean.n_fg_dynamic += r.n_fg_dynamic;
    out.mean.n_fg_static += r.n_fg_static;
    out.mean.n_bg += r.n_bg;
    lo = std::min(lo, r.threeway_epe);
    hi = std::max(hi, r.threeway_epe);
  }
  out.threeway_spread = hi - lo;
  return out;
}

std::vector<ScalingPoint> scaling_curve(
    const std::vector<double>& fractions,
    const std::function<std::pair<size_t, ThreewayReport>(double fraction)>& run) {
  if (fractions.empty()) throw std::invalid_argument("scaling_curve: no fractions");
  for (size_t i = 0; i < fractions.size(); ++i) {
    if (fractions[i] <= 0.0 || fractions[i] > 1.0)
      throw std::invalid_argument("scaling_curve: fractions must lie in (0,1]");
    if (i > 0 && fractions[i] <= fractions[i - 1])
      throw std::invalid_argument("scaling_curve: fractions must be strictly increasing");
  }
  std::vector<ScalingPoint> out;
  for (double f : fractions) {
    auto [n_train, report] = run(f);
    if (n_train == 0)
      throw std::runtime_error("scaling_curve: fraction " + std::to_string(f) +
                               " yields an empty subset");
    out.push_back({f, n_train, report});
  }
  return out;
}

void write_scaling_csv(const std::filesystem::path& path, const std::vector<ScalingPoint>& points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scaling csv: " + path.string());
  out << "fraction,n_train,threeway_epe,fg_dynamic,fg_static,bg\n";
  for (const auto& p : points) {
    out << fmt(p.fraction) << "," << p.n_train << "," << fmt(p.report.threeway_epe) << ","
        << fmt(p.report.fg_dynamic_epe) << "," << fmt(p.report.fg_static_epe) << ","
        << fmt(p.report.bg_epe) << "\n";
  }
}

double loglog_slope(const std::vector<ScalingPoint>& points) {
  if (points.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(points.size());
  for (const auto& p : points) {
    const double x = std::log10(p.fraction);
    const double y = std::log10(p.report.threeway_epe);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace flow
