#include "flow/eval/bench.hpp"

#include <chrono>
#include <cmath>

namespace flow {

BenchResult bench_runtime(const FlowEstimator& estimator, const std::vector<SceneSample>& samples,
                          int repeats) {
  if (repeats < 3) throw std::invalid_argument("bench_runtime: repeats must be >= 3");
  if (samples.empty()) throw std::invalid_argument("bench_runtime: no samples");

  std::vector<double> timings;
  timings.reserve(static_cast<size_t>(repeats - 1) * samples.size());
  for (int r = 0; r < repeats; ++r) {
    for (const auto& s : samples) {
      const auto start = std::chrono::steady_clock::now();
      volatile double sink = estimator.estimate(s.cloud_t, s.cloud_t1).vectors.size() > 0
                                 ? 1.0
                                 : 0.0;  // keep the call alive
      (void)sink;
      const auto end = std::chrono::steady_clock::now();
      if (r == 0) continue;  // warm-up pass
      timings.push_back(std::chrono::duration<double, std::milli>(end - start).count());
    }
  }

  double mean = 0.0;
  for (double t : timings) mean += t;
  mean /= static_cast<double>(timings.size());
  double var = 0.0;
  for (double t : timings) var += (t - mean) * (t - mean);
  var /= static_cast<double>(timings.size());

  return {mean, std::sqrt(var), timings.size()};
}

}  // namespace flow
