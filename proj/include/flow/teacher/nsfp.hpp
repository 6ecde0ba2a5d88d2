#pragma once

#include <limits>
#include <string>

#include "flow/core/types.hpp"
#include "flow/neighbors/chamfer.hpp"
#include "flow/nn/mlp.hpp"

namespace flow {

struct TeacherConfig {
  std::vector<int> mlp_widths = {3, 64, 64, 64, 3};
  nn::Activation activation = nn::Activation::ReLU;
  int max_iters = 1000;
  double lr = 1e-3;
  int early_stop_patience = 50;
  double early_stop_min_delta = 1e-4;
  ChamferConfig chamfer;
  uint64_t seed = 0;

  void validate() const;
};

struct PseudoLabel {
  FlowField flow;  // aligned to cloud_t
  std::string teacher_name;
  double final_loss = 0.0;
  uint32_t iters_run = 0;
  uint64_t wall_time_ms = 0;
  // Cycle-consistency residual at the returned solution.
  double cycle_loss = 0.0;
};

// Stops after `patience` consecutive observations without an improvement of
// more than `min_delta` over the best seen loss.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  bool should_stop(double loss) {
    if (loss < best_ - min_delta_) {
      best_ = loss;
      since_improvement_ = 0;
      return false;
    }
    return ++since_improvement_ >= patience_;
  }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
};

// Test-time optimization of a forward and a backward coordinate MLP against
// the truncated-Chamfer + cycle-consistency objective. Returns the forward
// flow of the best-loss iterate; the best tracker is seeded with the
// zero-flow evaluation, so the result is never worse than predicting zeros.
PseudoLabel nsfp_optimize(const PointCloud& cloud_t, const PointCloud& cloud_t1,
                          const TeacherConfig& cfg);

}  // namespace flow
