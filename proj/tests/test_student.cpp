#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flow/core/io.hpp"
#include "flow/core/scene.hpp"
#include "flow/student/train.hpp"
#include "flow/teacher/pseudolabel.hpp"
#include "test_util.hpp"

using namespace flow;
using flow::test::fd_worst_error;

namespace {

PillarConfig tiny_pillars() {
  PillarConfig cfg;
  cfg.pillar_size = 0.2;
  cfg.area_half_extent = 1.6;  // 16x16 grid
  cfg.embed_dim = 4;
  cfg.unet_levels = 4;
  return cfg;
}

PointCloud random_cloud_in_area(size_t n, double he, Rng& rng) {
  PointCloud c;
  for (size_t i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-he, he), rng.uniform(-he, he), rng.uniform(0.0, 2.0)});
  return c;
}

}  // namespace

TEST_CASE("pillar config") {
  PillarConfig cfg;  // paper defaults: 51.2 m, 0.2 m -> 512
  CHECK(cfg.grid_cells() == 512);
  CHECK_NOTHROW(cfg.validate());

  PillarConfig desk = PillarConfig::desk_scale();
  CHECK(desk.grid_cells() == 128);

  SUBCASE("xl scaling relations") {
    const PillarConfig xl = desk.xl();
    CHECK(xl.grid_cells() == 2 * desk.grid_cells());  // 4x pillar count
    CHECK(xl.grid_cells() * xl.grid_cells() == 4 * desk.grid_cells() * desk.grid_cells());
    CHECK(xl.embed_dim == 2 * desk.embed_dim);
    CHECK(xl.unet_levels == desk.unet_levels + 1);
  }
  SUBCASE("divisibility enforced") {
    PillarConfig bad = desk;
    bad.unet_levels = 9;  // 128 not divisible by 256
    CHECK_THROWS(bad.validate());
  }
}

TEST_CASE("pillar cell indexing") {
  PillarConfig cfg;  // he=51.2, ps=0.2, grid 512
  PointCloud c;
  c.points = {{0.05, 0.05, 1.0}};
  const Pillarization pil = assign_pillars(c, cfg);
  const int grid = cfg.grid_cells();
  const int row = pil.cell_of_point[0] / grid;
  const int col = pil.cell_of_point[0] % grid;
  CHECK(row == 256);
  CHECK(col == 256);
  // Offsets from the pillar center (center at 0.1, 0.1).
  CHECK(pil.features.v[0] == doctest::Approx(-0.05).epsilon(1e-9));
  CHECK(pil.features.v[1] == doctest::Approx(-0.05).epsilon(1e-9));
  CHECK(pil.features.v[2] == 1.0);
  CHECK(pil.features.v[3] == 1.0);

  SUBCASE("max boundary goes to the last cell") {
    PointCloud b;
    b.points = {{51.2, -51.2, 0.0}};
    const Pillarization p = assign_pillars(b, cfg);
    CHECK(p.cell_of_point[0] % grid == grid - 1);  // col for x = +he
    CHECK(p.cell_of_point[0] / grid == 0);         // row for y = -he
  }
  SUBCASE("outside the area is an error") {
    PointCloud b;
    b.points = {{51.3, 0.0, 0.0}};
    CHECK_THROWS(assign_pillars(b, cfg));
  }
}

TEST_CASE("pseudoimage: empty cells zero, permutation invariance") {
  Rng rng(5);
  const PillarConfig cfg = tiny_pillars();
  StudentModel model = StudentModel::init(cfg, 42);
  PointCloud c = random_cloud_in_area(40, cfg.area_half_extent - 0.01, rng);

  const Pseudoimage img = pillarize(c, model);
  const int grid = cfg.grid_cells();
  REQUIRE(img.features.shape == std::vector<int>{grid * grid, cfg.embed_dim});

  std::vector<bool> occupied(static_cast<size_t>(grid) * grid, false);
  for (int cell : img.cell_of_point) occupied[static_cast<size_t>(cell)] = true;
  for (int cell = 0; cell < grid * grid; ++cell) {
    if (occupied[static_cast<size_t>(cell)]) continue;
    for (int ch = 0; ch < cfg.embed_dim; ++ch)
      CHECK(img.features.v[static_cast<size_t>(cell) * cfg.embed_dim + ch] == 0.0);
  }

  // Permuting the points leaves the pooled image bitwise unchanged.
  PointCloud shuffled = c;
  Rng perm(9);
  perm.shuffle(shuffled.points);
  const Pseudoimage img2 = pillarize(shuffled, model);
  CHECK(img.features.v == img2.features.v);
}

TEST_CASE("translation covariance: shifting by one pillar shifts one column") {
  // Exactly representable pillar size so the shift is numerically exact.
  PillarConfig cfg;
  cfg.pillar_size = 0.25;
  cfg.area_half_extent = 4.0;  // grid 32
  cfg.embed_dim = 4;
  cfg.unet_levels = 4;
  StudentModel model = StudentModel::init(cfg, 7);

  Rng rng(11);
  PointCloud c;
  for (int i = 0; i < 60; ++i) {
    // Coordinates on a 1/64 lattice stay exact under +0.25.
    const double x = static_cast<double>(static_cast<int>(rng.uniform_int(400)) - 200) / 64.0;
    const double y = static_cast<double>(static_cast<int>(rng.uniform_int(400)) - 200) / 64.0;
    c.points.push_back({x, y, rng.uniform(0.0, 2.0)});
  }
  PointCloud shifted = c;
  for (auto& p : shifted.points) p.x += 0.25;

  const Pseudoimage a = pillarize(c, model);
  const Pseudoimage b = pillarize(shifted, model);
  const int grid = cfg.grid_cells();
  for (int row = 0; row < grid; ++row) {
    for (int col = 0; col < grid - 1; ++col) {
      for (int ch = 0; ch < cfg.embed_dim; ++ch) {
        CHECK(b.features.v[(static_cast<size_t>(row) * grid + col + 1) * cfg.embed_dim + ch] ==
              a.features.v[(static_cast<size_t>(row) * grid + col) * cfg.embed_dim + ch]);
      }
    }
  }
}

TEST_CASE("student forward: shape, finiteness, determinism, area scaling") {
  Rng rng(3);
  const PillarConfig cfg = tiny_pillars();
  StudentModel model = StudentModel::init(cfg, 1);
  const PointCloud t = random_cloud_in_area(50, cfg.area_half_extent - 0.01, rng);
  const PointCloud t1 = random_cloud_in_area(45, cfg.area_half_extent - 0.01, rng);

  const FlowField f1 = student_forward(model, t, t1);
  REQUIRE(f1.size() == t.size());
  for (const auto& v : f1.vectors) CHECK(v.finite());

  const FlowField f2 = student_forward(model, t, t1);
  for (size_t i = 0; i < f1.size(); ++i) {
    CHECK(f1.vectors[i].x == f2.vectors[i].x);
    CHECK(f1.vectors[i].y == f2.vectors[i].y);
    CHECK(f1.vectors[i].z == f2.vectors[i].z);
  }

  PillarConfig doubled = cfg;
  doubled.area_half_extent = cfg.area_half_extent * 2;
  CHECK(doubled.grid_cells() == 2 * cfg.grid_cells());
}

TEST_CASE("weight function") {
  const double dt = 0.1;
  SUBCASE("table values on exact speeds") {
    CHECK(speed_interp_weight(0.0) == 0.1);
    CHECK(speed_interp_weight(0.3) == 0.1);
    CHECK(speed_interp_weight(0.4) == 0.1);  // formula -0.08 clamped up
    CHECK(speed_interp_weight(0.5) == 0.1);
    CHECK(speed_interp_weight(0.75) == 1.8 * 0.75 - 0.8);  // 0.55
    CHECK(speed_interp_weight(0.75) == 0.55);
    CHECK(speed_interp_weight(0.9) == 1.8 * 0.9 - 0.8);    // 0.82
    CHECK(speed_interp_weight(1.0) == 1.0);
    CHECK(speed_interp_weight(1.5) == 1.0);
  }
  SUBCASE("vector form agrees with the speed form") {
    for (double s : {0.0, 0.3, 0.62, 0.9, 1.4}) {
      const double via_vec = point_weight(WeightScheme::SpeedInterp, std::nullopt, {s * dt, 0, 0}, dt);
      CHECK(via_vec == doctest::Approx(speed_interp_weight(s)).epsilon(1e-12));
    }
  }
  SUBCASE("monotone non-decreasing and bounded") {
    double prev = 0.0;
    for (double s = 0.0; s <= 3.0; s += 0.01) {
      const double w = speed_interp_weight(s);
      CHECK(w >= 0.1);
      CHECK(w <= 1.0);
      CHECK(w >= prev - 1e-15);
      prev = w;
    }
  }
  SUBCASE("uniform and semantic") {
    CHECK(point_weight(WeightScheme::Uniform, std::nullopt, {9, 9, 9}, dt) == 1.0);
    CHECK(point_weight(WeightScheme::Semantic, PointClass::Foreground, {}, dt) == 1.0);
    CHECK(point_weight(WeightScheme::Semantic, PointClass::Background, {}, dt) == 0.1);
    CHECK_THROWS(point_weight(WeightScheme::Semantic, std::nullopt, {}, dt));
  }
}

TEST_CASE("student loss") {
  SUBCASE("pred == label gives 0") {
    FlowField f;
    f.vectors = {{1, 2, 3}, {0, 0, 1}};
    CHECK(student_loss(f, f, {1.0, 1.0}) == 0.0);
  }
  SUBCASE("mean of residual norms") {
    FlowField pred, label;
    pred.vectors = {{1, 0, 0}, {0, 3, 0}};
    label.vectors = {{0, 0, 0}, {0, 0, 0}};
    CHECK(student_loss(pred, label, {1.0, 1.0}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(student_loss(pred, label, {0.1, 1.0}) == doctest::Approx(1.55).epsilon(1e-12));
  }
  SUBCASE("constant offset gives exactly its norm") {
    FlowField label;
    Rng rng(31);
    for (int i = 0; i < 5; ++i)
      label.vectors.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    FlowField pred = label;
    for (auto& v : pred.vectors) v = v + Point3{3.0, 0.0, 4.0};
    const std::vector<double> w(5, 1.0);
    CHECK(student_loss(pred, label, w) == 5.0);  // exact: 3-4-5 components

    // Graph form agrees with the plain form.
    nn::Graph g;
    nn::Tensor pred_t = nn::Tensor::zeros({5, 3});
    for (int i = 0; i < 5; ++i) {
      pred_t.v[i * 3 + 0] = pred.vectors[i].x;
      pred_t.v[i * 3 + 1] = pred.vectors[i].y;
      pred_t.v[i * 3 + 2] = pred.vectors[i].z;
    }
    auto node = g.leaf(pred_t, false);
    CHECK(g.value(student_loss_node(g, node, label, w)).v[0] == 5.0);
  }
  SUBCASE("length mismatch") {
    FlowField a = FlowField::zeros(2), b = FlowField::zeros(3);
    CHECK_THROWS(student_loss(a, b, {1, 1}));
  }
}

TEST_CASE("full-network gradient matches finite differences") {
  Rng rng(77);
  const PillarConfig cfg = tiny_pillars();
  StudentModel model = StudentModel::init(cfg, 5);
  const PointCloud t = random_cloud_in_area(30, cfg.area_half_extent - 0.01, rng);
  const PointCloud t1 = random_cloud_in_area(28, cfg.area_half_extent - 0.01, rng);
  FlowField label;
  for (size_t i = 0; i < t.size(); ++i)
    label.vectors.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.0});
  const std::vector<double> weights(t.size(), 1.0);

  nn::Graph g;
  StudentNodes nodes = register_student(g, model, true);
  auto loss = student_loss_node(g, student_forward_node(g, model, nodes, t, t1), label, weights);
  g.backward(loss);

  std::vector<nn::Tensor*> params;
  std::vector<const nn::Tensor*> grads;
  collect_student_grads(g, model, nodes, params, grads);
  const auto named = model.named_params();

  // Probe a few coordinates of every parameter tensor.
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto eval = [&](const nn::Tensor& replaced) {
      const nn::Tensor saved = *params[pi];
      *params[pi] = replaced;
      nn::Graph gg;
      StudentNodes nn2 = register_student(gg, model, false);
      const double out =
          gg.value(student_loss_node(gg, student_forward_node(gg, model, nn2, t, t1), label, weights)).v[0];
      *params[pi] = saved;
      return out;
    };
    const double err = fd_worst_error(*params[pi], eval, *grads[pi], 4, rng);
    INFO("param ", named[pi].first);
    CHECK(err < 1e-3);
    worst = std::max(worst, err);
  }
  MESSAGE("worst relative error: ", worst);
}

TEST_CASE("student checkpoint round trip and config mismatch") {
  test::TempDir tmp("student");
  const PillarConfig cfg = tiny_pillars();
  StudentModel model = StudentModel::init(cfg, 9);
  const auto path = tmp.path() / "model.zfck";
  model.save(path);
  const StudentModel loaded = StudentModel::load(path);
  const auto a = model.named_params();
  const auto b = loaded.named_params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.v == b[i].second.v);
  }

  // Estimating on out-of-area points reports a config mismatch.
  PointCloud far;
  far.points = {{100.0, 0.0, 0.0}};
  PointCloud ctx;
  ctx.points = {{0.0, 0.0, 0.0}};
  CHECK_THROWS_WITH_AS(StudentEstimator(loaded).estimate(far, ctx) /* out of area */,
                       doctest::Contains("config mismatch"), std::runtime_error);
}

TEST_CASE("train_student") {
  test::TempDir tmp("train");
  SceneConfig scene;
  scene.area_half_extent = 3.2;
  scene.n_background_points = 60;
  scene.n_objects = 1;
  scene.object_size_range = {0.8, 1.2};
  scene.object_speed_range = {2.0, 6.0};
  scene.seed = 5;
  const auto dataset = tmp.path() / "ds";
  generate_dataset(dataset, "train", scene, 8, Diversity::Diverse, 100);
  generate_dataset(dataset, "val", scene, 2, Diversity::Diverse, 5000);

  PseudolabelRun gt_run;
  gt_run.kind = TeacherKind::Gt;
  const auto labels = tmp.path() / "labels";
  pseudolabel_dataset(dataset, "train", labels, gt_run);

  PillarConfig pcfg;
  pcfg.pillar_size = 0.2;
  pcfg.area_half_extent = 3.2;  // grid 32
  pcfg.embed_dim = 4;
  pcfg.unet_levels = 4;

  SUBCASE("epochs=0 leaves the model unchanged with an empty log") {
    StudentModel m = StudentModel::init(pcfg, 3);
    const auto before = m.named_params();
    TrainOptions opt;
    opt.epochs = 0;
    const auto log = train_student(m, dataset, labels, opt);
    CHECK(log.empty());
    const auto after = m.named_params();
    for (size_t i = 0; i < before.size(); ++i) CHECK(before[i].second.v == after[i].second.v);
  }

  SUBCASE("a few epochs reduce the training loss; training is deterministic") {
    TrainOptions opt;
    opt.lr = 1e-3;
    opt.batch = 4;
    opt.epochs = 4;
    opt.seed = 11;

    StudentModel m1 = StudentModel::init(pcfg, 3);
    const auto log1 = train_student(m1, dataset, labels, opt);
    REQUIRE(log1.size() == 4);
    CHECK(log1.back().train_loss < log1.front().train_loss);

    StudentModel m2 = StudentModel::init(pcfg, 3);
    const auto log2 = train_student(m2, dataset, labels, opt);
    const auto p1 = tmp.path() / "m1.zfck";
    const auto p2 = tmp.path() / "m2.zfck";
    m1.save(p1);
    m2.save(p2);
    CHECK(test::read_file_bytes(p1) == test::read_file_bytes(p2));
    CHECK(log1.back().report.threeway_epe == log2.back().report.threeway_epe);
  }

  SUBCASE("missing label file is an error naming the path") {
    std::filesystem::remove(label_path(labels, 3));
    StudentModel m = StudentModel::init(pcfg, 3);
    TrainOptions opt;
    opt.epochs = 1;
    CHECK_THROWS_WITH_AS(train_student(m, dataset, labels, opt),
                         doctest::Contains("missing label"), std::runtime_error);
    // But a listed skip index is tolerated.
    opt.skip_indices = {3};
    CHECK_NOTHROW(train_student(m, dataset, labels, opt));
  }
}

TEST_CASE("epoch log csv format") {
  test::TempDir tmp("log");
  std::vector<EpochLogRow> log(1);
  log[0].epoch = 1;
  log[0].train_loss = 0.5;
  log[0].report.threeway_epe = 0.25;
  write_epoch_log_csv(tmp.path() / "log.csv", log);
  const std::string text = test::read_file_bytes(tmp.path() / "log.csv");
  CHECK(text.find("epoch,threeway_epe,fg_dynamic,fg_static,bg,train_loss") == 0);
  CHECK(text.find("1,0.25") != std::string::npos);
}
