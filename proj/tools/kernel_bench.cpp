// Times the serial reference kernels against their OpenMP variants on
// representative shapes and prints a speedup table. The two variants are
// bitwise identical by construction; this tool is about throughput.

#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "flow/core/rng.hpp"
#include "flow/core/scene.hpp"
#include "flow/neighbors/kdtree.hpp"
#include "flow/nn/kernels.hpp"

using namespace flow;
using namespace flow::nn;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

std::vector<double> random_buf(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void row(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-28s %10.3f %10.3f %8.2fx\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  {
    const int m = 2000, k = 64, n = 64;
    auto a = random_buf(static_cast<size_t>(m) * k, rng);
    auto b = random_buf(static_cast<size_t>(k) * n, rng);
    std::vector<double> c(static_cast<size_t>(m) * n);
    row("matmul 2000x64x64",
        time_ms([&] { kernels::matmul_serial(c.data(), a.data(), b.data(), m, k, n); }, 20),
        time_ms([&] { kernels::matmul_parallel(c.data(), a.data(), b.data(), m, k, n); }, 20));
  }
  {
    const int cin = 16, h = 128, w = 128, cout = 32;
    auto x = random_buf(static_cast<size_t>(cin) * h * w, rng);
    auto wt = random_buf(static_cast<size_t>(cout) * cin * 9, rng);
    std::vector<double> out(static_cast<size_t>(cout) * h * w);
    row("conv2d 16->32 @128^2",
        time_ms([&] { kernels::conv2d_serial(out.data(), x.data(), wt.data(), cin, h, w, cout, 3, 1, 1); }, 5),
        time_ms([&] { kernels::conv2d_parallel(out.data(), x.data(), wt.data(), cin, h, w, cout, 3, 1, 1); }, 5));
  }
  {
    const int cin = 32, h = 32, w = 32, cout = 16;
    auto x = random_buf(static_cast<size_t>(cin) * h * w, rng);
    auto wt = random_buf(static_cast<size_t>(cin) * cout * 4, rng);
    std::vector<double> out(static_cast<size_t>(cout) * 4 * h * w);
    row("tconv2 32->16 @32^2",
        time_ms([&] { kernels::tconv2_serial(out.data(), x.data(), wt.data(), cin, h, w, cout); }, 20),
        time_ms([&] { kernels::tconv2_parallel(out.data(), x.data(), wt.data(), cin, h, w, cout); }, 20));
  }
  {
    SceneConfig cfg;
    cfg.area_half_extent = 12.8;
    cfg.n_background_points = 4000;
    cfg.n_objects = 6;
    cfg.seed = 7;
    const SceneSample s = generate_scene(cfg);
    const KdTree tree(s.cloud_t1);
    std::vector<KdTree::Hit> hits;
    row("nearest_batch 4k->4k",
        time_ms([&] { nearest_batch_serial(tree, s.cloud_t.points, hits); }, 20),
        time_ms([&] { nearest_batch_parallel(tree, s.cloud_t.points, hits); }, 20));
  }
  return 0;
}
