#include "flow/eval/metrics.hpp"

#include <cmath>

#include "flow/core/io.hpp"

namespace flow {

double epe(const FlowField& pred, const FlowField& gt, const std::vector<bool>* mask) {
  if (pred.size() != gt.size()) throw std::invalid_argument("epe: length mismatch");
  if (mask && mask->size() != pred.size()) throw std::invalid_argument("epe: mask length mismatch");
  double acc = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    acc += (pred.vectors[i] - gt.vectors[i]).norm();
    ++n;
  }
  if (n == 0) throw std::invalid_argument("epe: empty point selection");
  return acc / static_cast<double>(n);
}

void ThreewayAccumulator::add(const FlowField& pred, const FlowField& gt,
                              const std::vector<PointClass>& classes, double dt,
                              const std::vector<bool>* mask) {
  if (pred.size() != gt.size() || classes.size() != pred.size())
    throw std::invalid_argument("threeway_epe: length mismatch");
  if (mask && mask->size() != pred.size())
    throw std::invalid_argument("threeway_epe: mask length mismatch");
  if (dt <= 0.0) throw std::invalid_argument("threeway_epe: dt must be > 0");
  for (size_t i = 0; i < pred.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double res = (pred.vectors[i] - gt.vectors[i]).norm();
    if (classes[i] == PointClass::Background) {
      sum_bg_ += res;
      ++n_bg_;
    } else if (gt.vectors[i].norm() / dt <= kDynamicSpeedThreshold) {
      sum_fs_ += res;
      ++n_fs_;
    } else {
      sum_fd_ += res;
      ++n_fd_;
    }
  }
}

void ThreewayAccumulator::add(const ThreewayAccumulator& other) {
  sum_bg_ += other.sum_bg_;
  sum_fs_ += other.sum_fs_;
  sum_fd_ += other.sum_fd_;
  n_bg_ += other.n_bg_;
  n_fs_ += other.n_fs_;
  n_fd_ += other.n_fd_;
}

ThreewayReport ThreewayAccumulator::report() const {
  if (n_bg_ + n_fs_ + n_fd_ == 0) throw std::invalid_argument("threeway_epe: no points");
  ThreewayReport r;
  r.n_bg = n_bg_;
  r.n_fg_static = n_fs_;
  r.n_fg_dynamic = n_fd_;
  double sum = 0.0;
  int buckets = 0;
  if (n_bg_ > 0) {
    r.bg_epe = sum_bg_ / static_cast<double>(n_bg_);
    sum += r.bg_epe;
    ++buckets;
  }
  if (n_fs_ > 0) {
    r.fg_static_epe = sum_fs_ / static_cast<double>(n_fs_);
    sum += r.fg_static_epe;
    ++buckets;
  }
  if (n_fd_ > 0) {
    r.fg_dynamic_epe = sum_fd_ / static_cast<double>(n_fd_);
    sum += r.fg_dynamic_epe;
    ++buckets;
  }
  r.threeway_epe = sum / static_cast<double>(buckets);
  return r;
}

ThreewayReport threeway_epe(const FlowField& pred, const FlowField& gt,
                            const std::vector<PointClass>& classes, double dt,
                            const std::vector<bool>* mask) {
  ThreewayAccumulator acc;
  acc.add(pred, gt, classes, dt, mask);
  return acc.report();
}

std::vector<bool> crop_mask(const PointCloud& cloud, double half_extent) {
  std::vector<bool> mask(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    mask[i] = std::abs(p.x) <= half_extent && std::abs(p.y) <= half_extent;
  }
  return mask;
}

ThreewayReport evaluate_on_split(const FlowEstimator& estimator,
                                 const std::filesystem::path& dataset_dir,
                                 const std::string& split, double crop_half_extent) {
  const size_t n = count_samples(dataset_dir, split);
  if (n == 0)
    throw std::runtime_error("evaluate_on_split: no samples under " +
                             (dataset_dir / split).string());
  ThreewayAccumulator acc;
  for (size_t i = 0; i < n; ++i) {
    const SceneSample s = read_scene_sample(sample_path(dataset_dir, split, i));
    const FlowField pred = estimator.estimate(s.cloud_t, s.cloud_t1);
    if (crop_half_extent > 0.0) {
      const auto mask = crop_mask(s.cloud_t, crop_half_extent);
      acc.add(pred, s.gt_flow, s.classes, s.dt_seconds, &mask);
    } else {
      acc.add(pred, s.gt_flow, s.classes, s.dt_seconds, nullptr);
    }
  }
  return acc.report();
}

}  // namespace flow
