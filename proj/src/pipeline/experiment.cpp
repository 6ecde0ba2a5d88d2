#include "flow/pipeline/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>

#include "flow/eval/bench.hpp"

namespace flow {

Method method_from_string(const std::string& s) {
  if (s == "student") return Method::Student;
  if (s == "zeroflow") return Method::ZeroFlow;
  throw std::invalid_argument("unknown method '" + s + "' (want student|zeroflow)");
}

std::string to_string(Method m) { return m == Method::Student ? "student" : "zeroflow"; }

void ExperimentConfig::validate() const {
  scene.validate();
  teacher.nsfp.validate();
  student.pillar.validate();
  if (name.empty()) throw std::invalid_argument("ExperimentConfig: name must not be empty");
  if (dataset.train_n == 0 || dataset.val_n == 0)
    throw std::invalid_argument("ExperimentConfig: train_n and val_n must be > 0");
  // Per-sample seeds are derived from split_seed + index; keep the raw seed
  // intervals disjoint so the splits can never alias.
  const uint64_t t0 = dataset.train_seed, t1 = dataset.train_seed + dataset.train_n;
  const uint64_t v0 = dataset.val_seed, v1 = dataset.val_seed + dataset.val_n;
  if (t0 < v1 && v0 < t1)
    throw std::invalid_argument("ExperimentConfig: train and val seed ranges overlap");
  if (student.lr <= 0.0 || student.batch < 1 || student.epochs < 0)
    throw std::invalid_argument("ExperimentConfig: bad student hyperparameters");
  if (eval.crop_half_extent <= 0.0)
    throw std::invalid_argument("ExperimentConfig: eval crop_half_extent must be > 0");
  if (jobs < 1) throw std::invalid_argument("ExperimentConfig: jobs must be >= 1");
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {
      {"version", 1},
      {"name", cfg.name},
      {"out_dir", cfg.out_dir.string()},
      {"method", to_string(cfg.method)},
      {"scene", scene_config_to_json(cfg.scene)},
      {"dataset",
       {{"train_n", cfg.dataset.train_n},
        {"val_n", cfg.dataset.val_n},
        {"diversity", cfg.dataset.diversity == Diversity::Diverse ? "diverse" : "contiguous"},
        {"train_seed", cfg.dataset.train_seed},
        {"val_seed", cfg.dataset.val_seed}}},
      {"teacher",
       {{"kind", to_string(cfg.teacher.kind)},
        {"seed", cfg.teacher.seed},
        {"nsfp",
         {{"mlp_widths", cfg.teacher.nsfp.mlp_widths},
          {"activation", to_string(cfg.teacher.nsfp.activation)},
          {"max_iters", cfg.teacher.nsfp.max_iters},
          {"lr", cfg.teacher.nsfp.lr},
          {"early_stop_patience", cfg.teacher.nsfp.early_stop_patience},
          {"early_stop_min_delta", cfg.teacher.nsfp.early_stop_min_delta},
          {"truncation_radius", cfg.teacher.nsfp.chamfer.truncation_radius}}}}},
      {"student",
       {{"pillar",
         {{"pillar_size", cfg.student.pillar.pillar_size},
          {"area_half_extent", cfg.student.pillar.area_half_extent},
          {"embed_dim", cfg.student.pillar.embed_dim},
          {"unet_levels", cfg.student.pillar.unet_levels}}},
        {"train",
         {{"lr", cfg.student.lr},
          {"batch", cfg.student.batch},
          {"epochs", cfg.student.epochs},
          {"scheme", to_string(cfg.student.scheme)},
          {"seed", cfg.student.seed}}}}},
      {"eval", {{"crop_half_extent", cfg.eval.crop_half_extent}}},
      {"jobs", cfg.jobs},
  };
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  require_version(j, 1, "experiment config");
  require_keys_subset(j,
                      {"version", "name", "out_dir", "method", "scene", "dataset", "teacher",
                       "student", "eval", "jobs"},
                      "experiment config");
  ExperimentConfig cfg;
  if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("method")) cfg.method = method_from_string(j.at("method").get<std::string>());
  if (j.contains("scene")) cfg.scene = scene_config_from_json(j.at("scene"));
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    require_keys_subset(d, {"train_n", "val_n", "diversity", "train_seed", "val_seed"}, "dataset");
    if (d.contains("train_n")) cfg.dataset.train_n = d.at("train_n").get<size_t>();
    if (d.contains("val_n")) cfg.dataset.val_n = d.at("val_n").get<size_t>();
    if (d.contains("diversity")) {
      const std::string s = d.at("diversity").get<std::string>();
      if (s == "diverse") cfg.dataset.diversity = Diversity::Diverse;
      else if (s == "contiguous") cfg.dataset.diversity = Diversity::Contiguous;
      else throw std::invalid_argument("unknown diversity '" + s + "' (want diverse|contiguous)");
    }
    if (d.contains("train_seed")) cfg.dataset.train_seed = d.at("train_seed").get<uint64_t>();
    if (d.contains("val_seed")) cfg.dataset.val_seed = d.at("val_seed").get<uint64_t>();
  }
  if (j.contains("teacher")) {
    const auto& t = j.at("teacher");
    require_keys_subset(t, {"kind", "seed", "nsfp"}, "teacher");
    if (t.contains("kind")) cfg.teacher.kind = teacher_kind_from_string(t.at("kind").get<std::string>());
    if (t.contains("seed")) cfg.teacher.seed = t.at("seed").get<uint64_t>();
    if (t.contains("nsfp")) {
      const auto& n = t.at("nsfp");
      require_keys_subset(n,
                          {"mlp_widths", "activation", "max_iters", "lr", "early_stop_patience",
                           "early_stop_min_delta", "truncation_radius"},
                          "teacher nsfp");
      if (n.contains("mlp_widths")) cfg.teacher.nsfp.mlp_widths = n.at("mlp_widths").get<std::vector<int>>();
      if (n.contains("activation"))
        cfg.teacher.nsfp.activation = nn::activation_from_string(n.at("activation").get<std::string>());
      if (n.contains("max_iters")) cfg.teacher.nsfp.max_iters = n.at("max_iters").get<int>();
      if (n.contains("lr")) cfg.teacher.nsfp.lr = n.at("lr").get<double>();
      if (n.contains("early_stop_patience"))
        cfg.teacher.nsfp.early_stop_patience = n.at("early_stop_patience").get<int>();
      if (n.contains("early_stop_min_delta"))
        cfg.teacher.nsfp.early_stop_min_delta = n.at("early_stop_min_delta").get<double>();
      if (n.contains("truncation_radius"))
        cfg.teacher.nsfp.chamfer.truncation_radius = n.at("truncation_radius").get<double>();
    }
  }
  if (j.contains("student")) {
    const auto& s = j.at("student");
    require_keys_subset(s, {"pillar", "train"}, "student");
    if (s.contains("pillar")) {
      const auto& p = s.at("pillar");
      require_keys_subset(p, {"pillar_size", "area_half_extent", "embed_dim", "unet_levels"},
                          "student pillar");
      if (p.contains("pillar_size")) cfg.student.pillar.pillar_size = p.at("pillar_size").get<double>();
      if (p.contains("area_half_extent"))
        cfg.student.pillar.area_half_extent = p.at("area_half_extent").get<double>();
      if (p.contains("embed_dim")) cfg.student.pillar.embed_dim = p.at("embed_dim").get<int>();
      if (p.contains("unet_levels")) cfg.student.pillar.unet_levels = p.at("unet_levels").get<int>();
    }
    if (s.contains("train")) {
      const auto& t = s.at("train");
      require_keys_subset(t, {"lr", "batch", "epochs", "scheme", "seed"}, "student train");
      if (t.contains("lr")) cfg.student.lr = t.at("lr").get<double>();
      if (t.contains("batch")) cfg.student.batch = t.at("batch").get<int>();
      if (t.contains("epochs")) cfg.student.epochs = t.at("epochs").get<int>();
      if (t.contains("scheme")) cfg.student.scheme = weight_scheme_from_string(t.at("scheme").get<std::string>());
      if (t.contains("seed")) cfg.student.seed = t.at("seed").get<uint64_t>();
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    require_keys_subset(e, {"crop_half_extent"}, "eval");
    if (e.contains("crop_half_extent")) cfg.eval.crop_half_extent = e.at("crop_half_extent").get<double>();
  }
  if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

// ------------------------------------------------------------------ caching

namespace {

std::string hex16(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

uint64_t hash_json(const nlohmann::json& j, uint64_t seed = 0xcbf29ce484222325ull) {
  const std::string s = j.dump();
  return fnv1a(s.data(), s.size(), seed);
}

std::filesystem::path cache_root(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("FLOWDISTILL_CACHE_DIR"); env && *env)
    return std::filesystem::path(env);
  return cfg.out_dir / "cache";
}

// Content hash over every regular file (sorted relative paths), excluding
// the DONE marker itself.
uint64_t dir_content_hash(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().filename() == "DONE.json") continue;
    files.push_back(std::filesystem::relative(entry.path(), dir));
  }
  std::sort(files.begin(), files.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& rel : files) {
    const std::string name = rel.generic_string();
    h = fnv1a(name.data(), name.size(), h);
    const uint64_t fh = fnv1a_file(dir / rel);
    h = fnv1a(&fh, sizeof(fh), h);
  }
  return h;
}

struct StageRunner {
  std::filesystem::path root;
  std::map<std::string, StageInfo>* stages;
  StageProgress progress;

  std::filesystem::path run(const std::string& stage, uint64_t hash,
                            const std::function<void(const std::filesystem::path&)>& build) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::filesystem::path dir = root / (stage + "-" + hex16(hash));
    const std::filesystem::path done = dir / "DONE.json";
    StageInfo info;
    info.hash_hex = hex16(hash);
    if (std::filesystem::exists(done)) {
      std::ifstream in(done);
      nlohmann::json j = nlohmann::json::parse(in);
      const std::string want = j.at("content_hash").get<std::string>();
      const std::string got = hex16(dir_content_hash(dir));
      if (want != got)
        throw std::runtime_error("stage '" + stage + "' cache corruption: content hash " + got +
                                 " does not match recorded " + want + " in " + dir.string());
      info.cache_hit = true;
    } else {
      std::filesystem::remove_all(dir);
      std::filesystem::create_directories(dir);
      if (progress) progress(stage, 0);
      build(dir);
      nlohmann::json j = {{"content_hash", hex16(dir_content_hash(dir))}};
      std::ofstream out(done);
      out << j.dump(2) << "\n";
      if (progress) progress(stage, 100);
    }
    info.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    (*stages)[stage] = info;
    return dir;
  }
};

nlohmann::json dataset_stage_key(const ExperimentConfig& cfg) {
  nlohmann::json j = experiment_config_to_json(cfg);
  return {{"scene", j.at("scene")}, {"dataset", j.at("dataset")}};
}

nlohmann::json labels_stage_key(const ExperimentConfig& cfg) {
  return experiment_config_to_json(cfg).at("teacher");
}

nlohmann::json train_stage_key(const ExperimentConfig& cfg) {
  return experiment_config_to_json(cfg).at("student");
}

nlohmann::json eval_stage_key(const ExperimentConfig& cfg) {
  nlohmann::json j = experiment_config_to_json(cfg);
  return {{"eval", j.at("eval")}, {"method", j.at("method")}, {"name", cfg.name}};
}

}  // namespace

void enforce_label_failure_policy(const PseudolabelOutcome& outcome, size_t dataset_n) {
  if (outcome.failures.size() * 100 > dataset_n)
    throw std::runtime_error("labels stage: " + std::to_string(outcome.failures.size()) +
                             " pseudo-label failures exceed the 1% tolerance over " +
                             std::to_string(dataset_n) + " samples");
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const StageProgress& progress) {
  cfg.validate();
  if (cfg.out_dir.empty()) throw std::invalid_argument("run_experiment: out_dir must be set");
  std::filesystem::create_directories(cfg.out_dir);

  ExperimentResult result;
  StageRunner runner{cache_root(cfg), &result.stages, progress};
  std::filesystem::create_directories(runner.root);

  const uint64_t h_dataset = hash_json(dataset_stage_key(cfg));
  result.dataset_dir = runner.run("dataset", h_dataset, [&](const std::filesystem::path& dir) {
    generate_dataset(dir, "train", cfg.scene, cfg.dataset.train_n, cfg.dataset.diversity,
                     cfg.dataset.train_seed);
    if (progress) progress("dataset", 50);
    generate_dataset(dir, "val", cfg.scene, cfg.dataset.val_n, cfg.dataset.diversity,
                     cfg.dataset.val_seed);
  });

  std::unique_ptr<StudentModel> model;
  if (cfg.method == Method::Student) {
    const uint64_t h_labels = hash_json(labels_stage_key(cfg), h_dataset);
    result.labels_dir = runner.run("labels", h_labels, [&](const std::filesystem::path& dir) {
      PseudolabelRun run;
      run.kind = cfg.teacher.kind;
      run.nsfp = cfg.teacher.nsfp;
      run.global_seed = cfg.teacher.seed;
      run.jobs = cfg.jobs;
      auto outcome = pseudolabel_dataset(result.dataset_dir, "train", dir, run,
                                         [&](size_t done, size_t total) {
                                           if (progress)
                                             progress("labels", static_cast<int>(100 * done / total));
                                         });
      enforce_label_failure_policy(outcome, cfg.dataset.train_n);
    });

    const uint64_t h_train = hash_json(train_stage_key(cfg), h_labels);
    const std::filesystem::path train_dir =
        runner.run("train", h_train, [&](const std::filesystem::path& dir) {
          StudentModel fresh = StudentModel::init(cfg.student.pillar, cfg.student.seed);
          TrainOptions opt;
          opt.lr = cfg.student.lr;
          opt.batch = cfg.student.batch;
          opt.epochs = cfg.student.epochs;
          opt.scheme = cfg.student.scheme;
          opt.seed = cfg.student.seed;
          opt.eval_crop_half_extent = cfg.eval.crop_half_extent;
          opt.skip_indices = read_label_failures(result.labels_dir);
          opt.on_epoch = [&](int e, int total) {
            if (progress) progress("train", 100 * e / total);
          };
          auto log = train_student(fresh, result.dataset_dir, result.labels_dir, opt);
          fresh.save(dir / "student.zfck");
          write_epoch_log_csv(dir / "student.epochs.csv", log);
        });
    result.ckpt_path = train_dir / "student.zfck";
    model = std::make_unique<StudentModel>(StudentModel::load(result.ckpt_path));
  }

  const uint64_t h_upstream =
      cfg.method == Method::Student
          ? hash_json(train_stage_key(cfg), hash_json(labels_stage_key(cfg), h_dataset))
          : h_dataset;
  const uint64_t h_eval = hash_json(eval_stage_key(cfg), h_upstream);
  const std::filesystem::path eval_dir =
      runner.run("eval", h_eval, [&](const std::filesystem::path& dir) {
        ThreewayReport report;
        if (cfg.method == Method::Student) {
          report = evaluate_on_split(StudentEstimator(*model), result.dataset_dir, "val",
                                     cfg.eval.crop_half_extent);
        } else {
          report = evaluate_on_split(ZeroFlowEstimator(), result.dataset_dir, "val",
                                     cfg.eval.crop_half_extent);
        }
        write_report_csv(dir / "report.csv", {{cfg.name, report, std::nan(""), std::nan("")}});
      });

  const auto rows = read_report_csv(eval_dir / "report.csv");
  if (rows.size() != 1) throw std::runtime_error("eval stage produced an unexpected report");
  // Counts are not carried through CSV; recompute presence from values.
  result.report = rows[0].report;
  result.report_path = cfg.out_dir / "report.csv";
  std::filesystem::copy_file(eval_dir / "report.csv", result.report_path,
                             std::filesystem::copy_options::overwrite_existing);

  nlohmann::json manifest = {{"version", 1},
                             {"tool_version", kToolVersion},
                             {"name", cfg.name},
                             {"config", experiment_config_to_json(cfg)},
                             {"config_hash", hex16(hash_json(experiment_config_to_json(cfg)))},
                             {"stages", nlohmann::json::object()},
                             {"paths",
                              {{"dataset", result.dataset_dir.string()},
                               {"labels", result.labels_dir.string()},
                               {"checkpoint", result.ckpt_path.string()},
                               {"report", result.report_path.string()}}}};
  for (const auto& [stage, info] : result.stages)
    manifest["stages"][stage] = {
        {"hash", info.hash_hex}, {"cache_hit", info.cache_hit}, {"wall_ms", info.wall_ms}};
  std::ofstream mf(cfg.out_dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest in " + cfg.out_dir.string());
  mf << manifest.dump(2) << "\n";

  return result;
}

std::vector<MethodReportRow> compare_methods(const std::vector<ExperimentConfig>& arms,
                                             const std::filesystem::path& out_csv,
                                             const StageProgress& progress) {
  if (arms.size() < 2) throw std::invalid_argument("compare_methods: need at least 2 arms");

  auto val_split_key = [](const ExperimentConfig& cfg) {
    nlohmann::json j = experiment_config_to_json(cfg);
    return nlohmann::json{{"scene", j.at("scene")},
                          {"val_n", cfg.dataset.val_n},
                          {"val_seed", cfg.dataset.val_seed},
                          {"diversity", j.at("dataset").at("diversity")},
                          {"eval", j.at("eval")}}
        .dump();
  };
  const std::string want = val_split_key(arms[0]);
  for (const auto& arm : arms)
    if (val_split_key(arm) != want)
      throw std::invalid_argument("compare_methods: arm '" + arm.name +
                                  "' does not share the val split/eval crop of the first arm");

  std::vector<MethodReportRow> rows;
  for (const auto& arm : arms) {
    ExperimentResult res = run_experiment(arm, progress);

    // Runtime columns: per-pair estimate on up to 20 val samples.
    std::vector<SceneSample> bench_samples;
    const size_t n_bench = std::min<size_t>(20, arm.dataset.val_n);
    for (size_t i = 0; i < n_bench; ++i)
      bench_samples.push_back(read_scene_sample(sample_path(res.dataset_dir, "val", i)));

    MethodReportRow row;
    row.method = arm.name;
    row.report = res.report;
    if (arm.method == Method::Student) {
      StudentModel model = StudentModel::load(res.ckpt_path);
      const BenchResult bench = bench_runtime(StudentEstimator(model), bench_samples, 3);
      row.runtime_ms_mean = bench.mean_ms;
      row.runtime_ms_std = bench.std_ms;
    } else {
      const BenchResult bench = bench_runtime(ZeroFlowEstimator(), bench_samples, 3);
      row.runtime_ms_mean = bench.mean_ms;
      row.runtime_ms_std = bench.std_ms;
    }
    rows.push_back(std::move(row));
  }

  std::sort(rows.begin(), rows.end(), [](const MethodReportRow& a, const MethodReportRow& b) {
    return a.report.threeway_epe < b.report.threeway_epe;
  });
  write_report_csv(out_csv, rows);
  return rows;
}

std::vector<ScalingPoint> run_scaling(const ExperimentConfig& cfg,
                                      const std::vector<double>& fractions,
                                      const StageProgress& progress) {
  return scaling_curve(fractions, [&](double f) -> std::pair<size_t, ThreewayReport> {
    ExperimentConfig arm = cfg;
    arm.dataset.train_n = static_cast<size_t>(std::floor(static_cast<double>(cfg.dataset.train_n) * f));
    if (arm.dataset.train_n == 0) return {0, {}};
    arm.name = cfg.name + "-frac" + std::to_string(f);
    arm.out_dir = cfg.out_dir / ("frac-" + std::to_string(f));
    ExperimentResult res = run_experiment(arm, progress);
    return {arm.dataset.train_n, res.report};
  });
}

}  // namespace flow
