#pragma once

#include <filesystem>
#include <functional>

#include "flow/core/estimator.hpp"
#include "flow/core/types.hpp"

namespace flow {

// Mean L2 residual norm over (optionally masked) points.
double epe(const FlowField& pred, const FlowField& gt, const std::vector<bool>* mask = nullptr);

// Buckets: Background class; Foreground at gt speed <= 0.5 m/s (Static FG);
// Foreground above (Dynamic FG). The threeway value is the mean of the
// non-empty bucket EPEs; empty buckets are excluded and flagged by count 0.
struct ThreewayReport {
  double threeway_epe = 0.0;
  double fg_dynamic_epe = 0.0;
  double fg_static_epe = 0.0;
  double bg_epe = 0.0;
  size_t n_fg_dynamic = 0;
  size_t n_fg_static = 0;
  size_t n_bg = 0;

  bool all_buckets_present() const { return n_fg_dynamic > 0 && n_fg_static > 0 && n_bg > 0; }
};

constexpr double kDynamicSpeedThreshold = 0.5;  // m/s

ThreewayReport threeway_epe(const FlowField& pred, const FlowField& gt,
                            const std::vector<PointClass>& classes, double dt,
                            const std::vector<bool>* mask = nullptr);

// Split-level aggregation: buckets pool residuals across samples, then the
// report is computed once over the pooled buckets (fold in sample order).
class ThreewayAccumulator {
 public:
  void add(const FlowField& pred, const FlowField& gt, const std::vector<PointClass>& classes,
           double dt, const std::vector<bool>* mask = nullptr);
  void add(const ThreewayAccumulator& other);
  ThreewayReport report() const;

 private:
  double sum_bg_ = 0.0, sum_fs_ = 0.0, sum_fd_ = 0.0;
  size_t n_bg_ = 0, n_fs_ = 0, n_fd_ = 0;
};

// Points of cloud_t inside the |x|,|y| <= half_extent box; the estimator
// still sees the full clouds, only the metric is restricted.
std::vector<bool> crop_mask(const PointCloud& cloud, double half_extent);

// Runs the estimator over <dataset>/<split> and pools buckets across all
// samples. crop_half_extent 0 evaluates every point.
ThreewayReport evaluate_on_split(const FlowEstimator& estimator,
                                 const std::filesystem::path& dataset_dir,
                                 const std::string& split, double crop_half_extent);

}  // namespace flow
