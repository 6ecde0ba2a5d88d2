#pragma once

#include "flow/eval/metrics.hpp"

namespace flow {

struct BenchResult {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  size_t n_timings = 0;
};

// Per-pair wall clock over `repeats` passes; the first pass is warm-up and
// is discarded. repeats must be >= 3.
BenchResult bench_runtime(const FlowEstimator& estimator, const std::vector<SceneSample>& samples,
                          int repeats);

}  // namespace flow
