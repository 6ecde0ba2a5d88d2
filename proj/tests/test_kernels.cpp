// Serial reference vs OpenMP kernels: results must be bitwise identical so
// every determinism contract holds regardless of the parallel switch.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flow/core/scene.hpp"
#include "flow/neighbors/kdtree.hpp"
#include "flow/nn/kernels.hpp"
#include "test_util.hpp"

using namespace flow;
using namespace flow::nn;
using flow::test::random_tensor;

TEST_CASE("matmul family: serial == parallel bitwise") {
  Rng rng(1);
  for (auto [m, k, n] : {std::tuple{37, 13, 29}, std::tuple{128, 64, 64}, std::tuple{1, 5, 1}}) {
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor g = random_tensor({m, n}, rng);

    std::vector<double> c1(static_cast<size_t>(m) * n), c2 = c1;
    kernels::matmul_serial(c1.data(), a.v.data(), b.v.data(), m, k, n);
    kernels::matmul_parallel(c2.data(), a.v.data(), b.v.data(), m, k, n);
    CHECK(c1 == c2);

    std::vector<double> ga1(static_cast<size_t>(m) * k, 0.5), ga2 = ga1;
    kernels::matmul_grad_a_serial(ga1.data(), g.v.data(), b.v.data(), m, k, n);
    kernels::matmul_grad_a_parallel(ga2.data(), g.v.data(), b.v.data(), m, k, n);
    CHECK(ga1 == ga2);

    std::vector<double> gb1(static_cast<size_t>(k) * n, -0.25), gb2 = gb1;
    kernels::matmul_grad_b_serial(gb1.data(), a.v.data(), g.v.data(), m, k, n);
    kernels::matmul_grad_b_parallel(gb2.data(), a.v.data(), g.v.data(), m, k, n);
    CHECK(gb1 == gb2);
  }
}

TEST_CASE("conv2d family: serial == parallel bitwise") {
  Rng rng(2);
  for (int stride : {1, 2}) {
    const int cin = 5, h = 17, w = 19, cout = 7, k = 3, pad = 1;
    Tensor x = random_tensor({cin, h, w}, rng);
    Tensor wt = random_tensor({cout, cin, k, k}, rng);
    const int ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
    Tensor gout = random_tensor({cout, ho, wo}, rng);

    std::vector<double> o1(static_cast<size_t>(cout) * ho * wo), o2 = o1;
    kernels::conv2d_serial(o1.data(), x.v.data(), wt.v.data(), cin, h, w, cout, k, stride, pad);
    kernels::conv2d_parallel(o2.data(), x.v.data(), wt.v.data(), cin, h, w, cout, k, stride, pad);
    CHECK(o1 == o2);

    std::vector<double> gx1(x.numel(), 0.125), gx2 = gx1;
    kernels::conv2d_grad_x_serial(gx1.data(), gout.v.data(), wt.v.data(), cin, h, w, cout, k, stride, pad);
    kernels::conv2d_grad_x_parallel(gx2.data(), gout.v.data(), wt.v.data(), cin, h, w, cout, k, stride, pad);
    CHECK(gx1 == gx2);

    std::vector<double> gw1(wt.numel(), 0.0), gw2 = gw1;
    kernels::conv2d_grad_w_serial(gw1.data(), x.v.data(), gout.v.data(), cin, h, w, cout, k, stride, pad);
    kernels::conv2d_grad_w_parallel(gw2.data(), x.v.data(), gout.v.data(), cin, h, w, cout, k, stride, pad);
    CHECK(gw1 == gw2);
  }
}

TEST_CASE("tconv2 family: serial == parallel bitwise") {
  Rng rng(3);
  const int cin = 6, h = 9, w = 11, cout = 4;
  Tensor x = random_tensor({cin, h, w}, rng);
  Tensor wt = random_tensor({cin, cout, 2, 2}, rng);
  Tensor gout = random_tensor({cout, 2 * h, 2 * w}, rng);

  std::vector<double> o1(static_cast<size_t>(cout) * 4 * h * w), o2 = o1;
  kernels::tconv2_serial(o1.data(), x.v.data(), wt.v.data(), cin, h, w, cout);
  kernels::tconv2_parallel(o2.data(), x.v.data(), wt.v.data(), cin, h, w, cout);
  CHECK(o1 == o2);

  std::vector<double> gx1(x.numel(), 1.0), gx2 = gx1;
  kernels::tconv2_grad_x_serial(gx1.data(), gout.v.data(), wt.v.data(), cin, h, w, cout);
  kernels::tconv2_grad_x_parallel(gx2.data(), gout.v.data(), wt.v.data(), cin, h, w, cout);
  CHECK(gx1 == gx2);

  std::vector<double> gw1(wt.numel(), 0.0), gw2 = gw1;
  kernels::tconv2_grad_w_serial(gw1.data(), x.v.data(), gout.v.data(), cin, h, w, cout);
  kernels::tconv2_grad_w_parallel(gw2.data(), x.v.data(), gout.v.data(), cin, h, w, cout);
  CHECK(gw1 == gw2);
}

TEST_CASE("nearest_batch: serial == parallel (exact hits)") {
  SceneConfig cfg;
  cfg.area_half_extent = 12.8;
  cfg.n_background_points = 1500;
  cfg.n_objects = 3;
  cfg.seed = 4;
  const SceneSample s = generate_scene(cfg);
  const KdTree tree(s.cloud_t1);
  std::vector<KdTree::Hit> a, b;
  nearest_batch_serial(tree, s.cloud_t.points, a);
  nearest_batch_parallel(tree, s.cloud_t.points, b);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].index == b[i].index);
    CHECK(a[i].squared_distance == b[i].squared_distance);
  }
}

TEST_CASE("parallel toggle is thread-local and restores") {
  CHECK(kernels::parallel_enabled());
  kernels::set_parallel_enabled(false);
  CHECK(!kernels::parallel_enabled());
  kernels::set_parallel_enabled(true);
  CHECK(kernels::parallel_enabled());
}
