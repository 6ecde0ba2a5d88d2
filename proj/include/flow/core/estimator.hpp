#pragma once

#include <string>

#include "flow/core/types.hpp"

namespace flow {

struct FlowEstimator {
  virtual ~FlowEstimator() = default;
  virtual std::string name() const = 0;
  virtual FlowField estimate(const PointCloud& cloud_t, const PointCloud& cloud_t1) const = 0;
};

// The ego-compensated "predict nothing moved" baseline.
struct ZeroFlowEstimator final : FlowEstimator {
  std::string name() const override { return "zeroflow"; }
  FlowField estimate(const PointCloud& cloud_t, const PointCloud&) const override {
    return FlowField::zeros(cloud_t.size());
  }
};

}  // namespace flow
