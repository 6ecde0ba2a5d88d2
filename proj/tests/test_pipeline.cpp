#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "flow/pipeline/experiment.hpp"
#include "test_util.hpp"

using namespace flow;

namespace {

// Small enough that a full run takes a few seconds.
ExperimentConfig tiny_config(const std::filesystem::path& out_dir) {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.out_dir = out_dir;
  cfg.scene.area_half_extent = 3.2;
  cfg.scene.n_background_points = 80;
  cfg.scene.n_objects = 1;
  cfg.scene.object_size_range = {0.8, 1.2};
  cfg.scene.object_speed_range = {2.0, 6.0};
  cfg.scene.seed = 5;
  cfg.dataset.train_n = 6;
  cfg.dataset.val_n = 2;
  cfg.teacher.kind = TeacherKind::Gt;
  cfg.student.pillar.pillar_size = 0.2;
  cfg.student.pillar.area_half_extent = 3.2;
  cfg.student.pillar.embed_dim = 4;
  cfg.student.pillar.unet_levels = 4;
  cfg.student.lr = 1e-3;
  cfg.student.batch = 3;
  cfg.student.epochs = 2;
  cfg.eval.crop_half_extent = 2.2;
  return cfg;
}

struct CacheEnvGuard {
  explicit CacheEnvGuard(const std::filesystem::path& dir) {
    setenv("FLOWDISTILL_CACHE_DIR", dir.string().c_str(), 1);
  }
  ~CacheEnvGuard() { unsetenv("FLOWDISTILL_CACHE_DIR"); }
};

uint64_t files_hash(const std::filesystem::path& dir) {
  uint64_t h = 0;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) h ^= fnv1a_file(f);
  return h;
}

}  // namespace

TEST_CASE("config json round trip and strictness") {
  test::TempDir tmp("cfg");
  ExperimentConfig cfg = tiny_config(tmp.path() / "out");
  const nlohmann::json j = experiment_config_to_json(cfg);
  const ExperimentConfig back = experiment_config_from_json(j);
  CHECK(experiment_config_to_json(back) == j);

  SUBCASE("unknown keys are hard errors") {
    nlohmann::json bad = j;
    bad["typo_field"] = 1;
    CHECK_THROWS_WITH_AS(experiment_config_from_json(bad), doctest::Contains("typo_field"),
                         std::runtime_error);
    nlohmann::json bad2 = j;
    bad2["student"]["train"]["learningrate"] = 0.1;
    CHECK_THROWS(experiment_config_from_json(bad2));
  }
  SUBCASE("version is required") {
    nlohmann::json bad = j;
    bad.erase("version");
    CHECK_THROWS(experiment_config_from_json(bad));
  }
  SUBCASE("overlapping split seeds rejected") {
    ExperimentConfig c = cfg;
    c.dataset.train_seed = 100;
    c.dataset.val_seed = 102;
    c.dataset.train_n = 10;
    CHECK_THROWS(c.validate());
  }
}

TEST_CASE("cache soundness: every field change reaches downstream stage hashes") {
  test::TempDir tmp("hash");
  const ExperimentConfig base = tiny_config(tmp.path() / "out");

  // Collect the eval-stage hash (chains through dataset+labels+train).
  auto final_hash = [](const ExperimentConfig& cfg) {
    const nlohmann::json j = experiment_config_to_json(cfg);
    const std::string s = j.dump();
    return fnv1a(s.data(), s.size());
  };
  const uint64_t h0 = final_hash(base);

  std::vector<ExperimentConfig> mutations;
  {
    auto m = base; m.scene.seed = 6; mutations.push_back(m);
    m = base; m.scene.n_background_points = 81; mutations.push_back(m);
    m = base; m.scene.lidar_noise_sigma = 0.02; mutations.push_back(m);
    m = base; m.dataset.train_n = 7; mutations.push_back(m);
    m = base; m.dataset.diversity = Diversity::Contiguous; mutations.push_back(m);
    m = base; m.teacher.kind = TeacherKind::Nn; mutations.push_back(m);
    m = base; m.teacher.seed = 9; mutations.push_back(m);
    m = base; m.teacher.nsfp.max_iters = 77; mutations.push_back(m);
    m = base; m.student.pillar.embed_dim = 8; mutations.push_back(m);
    m = base; m.student.lr = 2e-3; mutations.push_back(m);
    m = base; m.student.epochs = 3; mutations.push_back(m);
    m = base; m.student.scheme = WeightScheme::SpeedInterp; mutations.push_back(m);
    m = base; m.eval.crop_half_extent = 2.0; mutations.push_back(m);
  }
  for (const auto& m : mutations) CHECK(final_hash(m) != h0);
}

TEST_CASE("run_experiment end to end with caching") {
  test::TempDir tmp("exp");
  CacheEnvGuard guard(tmp.path() / "cache");
  ExperimentConfig cfg = tiny_config(tmp.path() / "out");

  const ExperimentResult r1 = run_experiment(cfg);
  CHECK(std::filesystem::exists(r1.report_path));
  CHECK(std::filesystem::exists(r1.ckpt_path));
  CHECK(std::filesystem::exists(cfg.out_dir / "manifest.json"));
  CHECK(r1.report.threeway_epe >= 0.0);
  for (const auto& [stage, info] : r1.stages) CHECK(!info.cache_hit);

  SUBCASE("second run is pure cache hits with byte-identical outputs") {
    const std::string report1 = test::read_file_bytes(r1.report_path);
    const std::string ckpt1 = test::read_file_bytes(r1.ckpt_path);
    const ExperimentResult r2 = run_experiment(cfg);
    for (const auto& [stage, info] : r2.stages) CHECK(info.cache_hit);
    CHECK(test::read_file_bytes(r2.report_path) == report1);
    CHECK(test::read_file_bytes(r2.ckpt_path) == ckpt1);
  }

  SUBCASE("training never mutates label files") {
    const uint64_t before = files_hash(r1.labels_dir);
    ExperimentConfig again = cfg;
    again.student.seed += 1;  // retrain, same labels stage
    run_experiment(again);
    CHECK(files_hash(r1.labels_dir) == before);
  }

  SUBCASE("cache corruption is detected by hash mismatch") {
    std::ofstream out(r1.labels_dir / "000000.zffl", std::ios::binary | std::ios::app);
    out << "tamper";
    out.close();
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("cache corruption"),
                         std::runtime_error);
  }
}

TEST_CASE("zero-flow method skips labeling and training") {
  test::TempDir tmp("zf");
  CacheEnvGuard guard(tmp.path() / "cache");
  ExperimentConfig cfg = tiny_config(tmp.path() / "out");
  cfg.method = Method::ZeroFlow;
  cfg.name = "zeroflow";
  const ExperimentResult r = run_experiment(cfg);
  CHECK(r.ckpt_path.empty());
  CHECK(r.stages.count("labels") == 0);
  CHECK(r.stages.count("train") == 0);
  // Static background is exactly zero under the compensated frame.
  const auto rows = read_report_csv(r.report_path);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].report.bg_epe == 0.0);
}

TEST_CASE("compare_methods") {
  test::TempDir tmp("cmp");
  CacheEnvGuard guard(tmp.path() / "cache");

  ExperimentConfig zero = tiny_config(tmp.path() / "zero");
  zero.method = Method::ZeroFlow;
  zero.name = "zeroflow";
  ExperimentConfig student = tiny_config(tmp.path() / "student");
  student.name = "gt-student";
  student.student.epochs = 3;

  SUBCASE("combined csv sorted by threeway epe") {
    const auto csv = tmp.path() / "compare.csv";
    const auto rows = compare_methods({zero, student}, csv);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].report.threeway_epe <= rows[1].report.threeway_epe);
    CHECK(std::filesystem::exists(csv));
    for (const auto& row : rows) CHECK(std::isfinite(row.runtime_ms_mean));
  }
  SUBCASE("val split mismatch across arms is rejected") {
    ExperimentConfig other = student;
    other.dataset.val_seed += 1;
    CHECK_THROWS_WITH_AS(compare_methods({zero, other}, tmp.path() / "x.csv"),
                         doctest::Contains("val split"), std::invalid_argument);
  }
  SUBCASE("fewer than two arms rejected") {
    CHECK_THROWS(compare_methods({zero}, tmp.path() / "y.csv"));
  }
}

TEST_CASE("run_scaling produces prefix subsets over a shared val split") {
  test::TempDir tmp("scal");
  CacheEnvGuard guard(tmp.path() / "cache");
  ExperimentConfig cfg = tiny_config(tmp.path() / "out");
  cfg.dataset.train_n = 6;
  cfg.student.epochs = 1;

  const auto points = run_scaling(cfg, {0.5, 1.0});
  REQUIRE(points.size() == 2);
  CHECK(points[0].n_train == 3);
  CHECK(points[1].n_train == 6);

  // The half-fraction dataset is a byte-identical prefix of the full one.
  const auto dirs = [&](double f) {
    for (const auto& e : std::filesystem::directory_iterator(tmp.path() / "cache"))
      if (e.path().filename().string().rfind("dataset-", 0) == 0) {
        if (count_samples(e.path(), "train") == (f == 0.5 ? 3u : 6u)) return e.path();
      }
    throw std::runtime_error("dataset cache dir not found");
  };
  const auto half = dirs(0.5), full = dirs(1.0);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(test::read_file_bytes(sample_path(half, "train", i)) ==
          test::read_file_bytes(sample_path(full, "train", i)));
  }
  CHECK(test::read_file_bytes(sample_path(half, "val", 0)) ==
        test::read_file_bytes(sample_path(full, "val", 0)));
}

TEST_CASE("failure policy: more than 1% label failures aborts the labels stage") {
  PseudolabelOutcome ok;
  ok.n_ok = 199;
  ok.failures = {{7, "boom"}};
  CHECK_NOTHROW(enforce_label_failure_policy(ok, 200));  // 0.5%

  PseudolabelOutcome bad;
  bad.n_ok = 5;
  bad.failures = {{2, "boom"}};
  CHECK_THROWS_WITH_AS(enforce_label_failure_policy(bad, 6), doctest::Contains("1%"),
                       std::runtime_error);
}

TEST_CASE("tampered dataset files trip the stage content check") {
  test::TempDir tmp("tamper");
  CacheEnvGuard guard(tmp.path() / "cache");
  ExperimentConfig cfg = tiny_config(tmp.path() / "out");
  const ExperimentResult r = run_experiment(cfg);
  std::ofstream out(sample_path(r.dataset_dir, "train", 2), std::ios::binary | std::ios::trunc);
  out << "garbage";
  out.close();
  CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("cache corruption"),
                       std::runtime_error);
}
