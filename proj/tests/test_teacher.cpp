#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flow/core/io.hpp"
#include "flow/core/scene.hpp"
#include "flow/eval/metrics.hpp"
#include "flow/teacher/pseudolabel.hpp"
#include "test_util.hpp"

using namespace flow;

namespace {

TeacherConfig fast_teacher(uint64_t seed) {
  TeacherConfig cfg;
  cfg.mlp_widths = {3, 32, 32, 3};
  cfg.max_iters = 220;
  cfg.lr = 2e-3;
  cfg.early_stop_patience = 30;
  cfg.seed = seed;
  return cfg;
}

std::string label_bytes(const PseudoLabel& l) {
  test::TempDir tmp("lbl");
  write_pseudolabel(tmp.path() / "l.zffl", l);
  return test::read_file_bytes(tmp.path() / "l.zffl");
}

}  // namespace

TEST_CASE("early stopper") {
  SUBCASE("strictly improving sequence never stops") {
    EarlyStopper s(3, 1e-4);
    double loss = 10.0;
    for (int i = 0; i < 100; ++i) {
      CHECK(!s.should_stop(loss));
      loss -= 0.01;  // improvement > min_delta every step
    }
  }
  SUBCASE("stops after patience steps without improvement") {
    EarlyStopper s(3, 1e-4);
    CHECK(!s.should_stop(1.0));
    CHECK(!s.should_stop(1.0));   // 1
    CHECK(!s.should_stop(0.9999999));  // 2: improvement below min_delta
    CHECK(s.should_stop(1.0));    // 3 -> stop
  }
  SUBCASE("a real improvement resets the counter") {
    EarlyStopper s(2, 1e-4);
    CHECK(!s.should_stop(1.0));
    CHECK(!s.should_stop(1.0));
    CHECK(!s.should_stop(0.5));
    CHECK(!s.should_stop(0.5));
    CHECK(s.should_stop(0.5));
  }
}

TEST_CASE("nsfp on identical clouds returns near-zero flow") {
  SceneConfig cfg;
  cfg.area_half_extent = 10.0;
  cfg.n_background_points = 250;
  cfg.n_objects = 0;
  cfg.lidar_noise_sigma = 0.0;
  cfg.seed = 3;
  SceneSample s = generate_scene(cfg);
  s.cloud_t1 = s.cloud_t;

  const PseudoLabel label = nsfp_optimize(s.cloud_t, s.cloud_t1, fast_teacher(1));
  CHECK(label.flow.size() == s.cloud_t.size());
  for (const auto& v : label.flow.vectors) CHECK(v.norm() <= 0.05);
  CHECK(label.final_loss >= 0.0);
  CHECK(std::isfinite(label.cycle_loss));
}

TEST_CASE("nsfp halves the zero-flow EPE on a translated box") {
  const RigidMotion motion = RigidMotion::translation_only({1.0, 0.0, 0.0});
  const SceneSample s = make_rigid_box_sample({0, 0, 1}, {1.2, 0.7, 0.5}, motion, 400, 0.01, 5);
  const PseudoLabel label = nsfp_optimize(s.cloud_t, s.cloud_t1, fast_teacher(2));
  const double err = epe(label.flow, s.gt_flow);
  const double zero_err = epe(FlowField::zeros(s.cloud_t.size()), s.gt_flow);
  CHECK(zero_err == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(err < 0.5 * zero_err);
  CHECK(label.iters_run <= static_cast<uint32_t>(fast_teacher(2).max_iters));
}

TEST_CASE("nsfp is deterministic for a fixed seed") {
  const RigidMotion motion = RigidMotion::translation_only({0.4, 0.2, 0.0});
  const SceneSample s = make_rigid_box_sample({1, -1, 1}, {0.8, 0.5, 0.4}, motion, 150, 0.01, 9);
  TeacherConfig cfg = fast_teacher(7);
  cfg.max_iters = 40;
  PseudoLabel a = nsfp_optimize(s.cloud_t, s.cloud_t1, cfg);
  PseudoLabel b = nsfp_optimize(s.cloud_t, s.cloud_t1, cfg);
  a.wall_time_ms = b.wall_time_ms = 0;
  CHECK(label_bytes(a) == label_bytes(b));
}

TEST_CASE("returned loss never exceeds the zero-flow loss") {
  const RigidMotion motion = RigidMotion::translation_only({0.8, 0.0, 0.0});
  const SceneSample s = make_rigid_box_sample({0, 0, 1}, {1.0, 0.6, 0.4}, motion, 120, 0.01, 13);
  const double zero_loss = truncated_chamfer(s.cloud_t, s.cloud_t1, ChamferConfig{});

  // A diverging learning rate must still return something no worse than the
  // zero-flow seed of the best tracker.
  TeacherConfig bad = fast_teacher(3);
  bad.lr = 50.0;
  bad.max_iters = 30;
  const PseudoLabel label = nsfp_optimize(s.cloud_t, s.cloud_t1, bad);
  CHECK(label.final_loss <= zero_loss + 1e-12);

  TeacherConfig good = fast_teacher(4);
  good.max_iters = 60;
  const PseudoLabel trained = nsfp_optimize(s.cloud_t, s.cloud_t1, good);
  CHECK(trained.final_loss <= zero_loss + 1e-12);
}

TEST_CASE("pseudolabel files round trip") {
  PseudoLabel l;
  l.teacher_name = "nsfp";
  l.flow.vectors = {{0.1, -0.2, 0.3}, {1, 2, 3}};
  l.final_loss = 0.125;
  l.iters_run = 77;
  l.wall_time_ms = 1234;
  test::TempDir tmp("zffl");
  write_pseudolabel(tmp.path() / "x.zffl", l);
  const PseudoLabel r = read_pseudolabel(tmp.path() / "x.zffl", "nsfp");
  CHECK(r.flow.size() == 2);
  CHECK(r.final_loss == 0.125);
  CHECK(r.iters_run == 77);
  CHECK(r.wall_time_ms == 1234);
  CHECK(r.flow.vectors[1].y == 2.0);
}

TEST_CASE("pseudolabel_dataset") {
  test::TempDir tmp("pl");
  SceneConfig scene;
  scene.area_half_extent = 10.0;
  scene.n_background_points = 120;
  scene.n_objects = 2;
  scene.object_size_range = {1.0, 2.0};
  scene.object_speed_range = {1.0, 6.0};
  scene.seed = 77;
  const auto dataset = tmp.path() / "dataset";
  generate_dataset(dataset, "train", scene, 6, Diversity::Diverse, 900);

  SUBCASE("gt teacher copies the stored flow exactly") {
    PseudolabelRun run;
    run.kind = TeacherKind::Gt;
    pseudolabel_dataset(dataset, "train", tmp.path() / "gt", run);
    for (size_t i = 0; i < 6; ++i) {
      const SceneSample s = read_scene_sample(sample_path(dataset, "train", i));
      const PseudoLabel l = read_pseudolabel(label_path(tmp.path() / "gt", i), "gt");
      REQUIRE(l.flow.size() == s.gt_flow.size());
      for (size_t p = 0; p < l.flow.size(); ++p) {
        // Both passed through f32 once; values must agree exactly.
        CHECK(l.flow.vectors[p].x == s.gt_flow.vectors[p].x);
        CHECK(l.flow.vectors[p].y == s.gt_flow.vectors[p].y);
        CHECK(l.flow.vectors[p].z == s.gt_flow.vectors[p].z);
      }
    }
  }

  SUBCASE("nn teacher matches the single-pair op") {
    PseudolabelRun run;
    run.kind = TeacherKind::Nn;
    pseudolabel_dataset(dataset, "train", tmp.path() / "nn", run);
    const SceneSample s = read_scene_sample(sample_path(dataset, "train", 2));
    const FlowField direct = nn_flow_teacher(s.cloud_t, s.cloud_t1);
    const PseudoLabel l = read_pseudolabel(label_path(tmp.path() / "nn", 2), "nn");
    for (size_t p = 0; p < l.flow.size(); ++p)
      CHECK(l.flow.vectors[p].x == doctest::Approx(direct.vectors[p].x).epsilon(1e-6));
  }

  SUBCASE("jobs=1 and jobs=4 produce byte-identical label files") {
    PseudolabelRun run;
    run.kind = TeacherKind::Nsfp;
    run.nsfp = fast_teacher(0);
    run.nsfp.max_iters = 25;
    run.global_seed = 42;
    run.jobs = 1;
    pseudolabel_dataset(dataset, "train", tmp.path() / "j1", run);
    run.jobs = 4;
    pseudolabel_dataset(dataset, "train", tmp.path() / "j4", run);
    for (size_t i = 0; i < 6; ++i) {
      CHECK(test::read_file_bytes(label_path(tmp.path() / "j1", i)) ==
            test::read_file_bytes(label_path(tmp.path() / "j4", i)));
    }
  }

  SUBCASE("per-sample failures are recorded and the run continues") {
    // Corrupt one sample file.
    const auto victim = sample_path(dataset, "train", 3);
    std::ofstream out(victim, std::ios::binary | std::ios::trunc);
    out << "garbage";
    out.close();
    PseudolabelRun run;
    run.kind = TeacherKind::Gt;
    const auto outcome = pseudolabel_dataset(dataset, "train", tmp.path() / "fail", run);
    CHECK(outcome.n_ok == 5);
    REQUIRE(outcome.failures.size() == 1);
    CHECK(outcome.failures[0].first == 3);
    const auto failures = read_label_failures(tmp.path() / "fail");
    REQUIRE(failures.size() == 1);
    CHECK(failures[0] == 3);
    CHECK(std::filesystem::exists(label_path(tmp.path() / "fail", 4)));
  }
}
