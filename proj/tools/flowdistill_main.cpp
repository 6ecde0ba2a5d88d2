// flowdistill: synthetic scene generation, pseudo-labeling, distillation
// training and evaluation from one binary. Logs go to stderr; data goes to
// the declared output paths only.

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "flow/eval/bench.hpp"
#include "flow/eval/heatmap.hpp"
#include "flow/pipeline/experiment.hpp"

namespace {

using namespace flow;

// One PROG line per stage per 5% step, machine-parsable.
class ProgressPrinter {
 public:
  void operator()(const std::string& stage, int percent) {
    int& last = last_[stage];
    if (percent != 0 && percent != 100 && percent / 5 == last / 5) return;
    last = percent;
    std::fprintf(stderr, "PROG %s %d%%\n", stage.c_str(), percent);
  }

 private:
  std::map<std::string, int> last_;
};

uint64_t seed_or(const CLI::Option* opt, uint64_t flag_value, uint64_t fallback) {
  return opt->count() > 0 ? flag_value : fallback;
}

HeatmapSpec heatmap_spec_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open heatmap spec: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
  }
  require_version(j, 1, "heatmap spec");
  require_keys_subset(j, {"version", "extent", "bins", "scale", "rotated", "speed_threshold"},
                      "heatmap spec");
  HeatmapSpec spec;
  if (j.contains("extent")) spec.extent = j.at("extent").get<double>();
  if (j.contains("bins")) spec.bins = j.at("bins").get<int>();
  if (j.contains("scale")) {
    const std::string s = j.at("scale").get<std::string>();
    if (s == "log") spec.scale = HeatScale::Log10;
    else if (s == "abs") spec.scale = HeatScale::Absolute;
    else throw std::runtime_error("heatmap spec: unknown scale '" + s + "' (want log|abs)");
  }
  if (j.contains("rotated")) spec.rotated = j.at("rotated").get<bool>();
  if (j.contains("speed_threshold")) spec.speed_threshold = j.at("speed_threshold").get<double>();
  spec.validate();
  return spec;
}

std::vector<double> parse_fractions(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::runtime_error("--fractions: no values parsed from '" + csv + "'");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowdistill: scene-flow distillation toolkit (synthetic rigid scenes)"};
  app.require_subcommand(1);

  std::string config_path, out_path, dataset_dir, labels_dir, model_path, report_path, spec_path,
      configs_dir, fractions_csv, teacher_name = "nsfp", crop_m_str;
  uint64_t seed = 0;
  int jobs = 1, repeats = 5;
  double crop_m = 0.0;

  auto* cmd_generate = app.add_subcommand("generate", "Generate a synthetic dataset (train+val splits)");
  cmd_generate->add_option("--config", config_path, "experiment config JSON (scene/dataset sections)")->required();
  cmd_generate->add_option("--out", out_path, "output dataset directory (declared output)")->required();
  auto* gen_seed = cmd_generate->add_option("--seed", seed, "base RNG seed overriding the config seeds");

  auto* cmd_pseudolabel = app.add_subcommand("pseudolabel", "Label every train pair with a teacher");
  cmd_pseudolabel->add_option("--dataset", dataset_dir, "dataset directory from `generate`")->required();
  cmd_pseudolabel->add_option("--teacher", teacher_name, "teacher: nsfp|nn|gt")->required();
  cmd_pseudolabel->add_option("--jobs", jobs, "worker pool size (frame pairs in parallel)");
  auto* pl_seed = cmd_pseudolabel->add_option("--seed", seed, "global seed; per-pair seed is seed XOR index");

  auto* cmd_train = app.add_subcommand("train", "Distill labels into the feedforward student");
  cmd_train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  cmd_train->add_option("--labels", labels_dir, "label directory from `pseudolabel`")->required();
  cmd_train->add_option("--config", config_path, "experiment config JSON (student section)")->required();
  cmd_train->add_option("--out", out_path, "checkpoint path; also writes <out>.json and <out>.epochs.csv")->required();
  auto* tr_seed = cmd_train->add_option("--seed", seed, "training seed overriding the config");

  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on the val split");
  cmd_eval->add_option("--model", model_path, "student checkpoint (.zfck)")->required();
  cmd_eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
  cmd_eval->add_option("--crop", crop_m, "evaluation box side in meters (points kept: |x|,|y| <= crop/2)")->required();
  cmd_eval->add_option("--report", report_path, "output CSV path (declared output)")->required();

  auto* cmd_heatmap = app.add_subcommand("heatmap", "Residual endpoint heatmap over the val split");
  cmd_heatmap->add_option("--model", model_path, "student checkpoint (.zfck)")->required();
  cmd_heatmap->add_option("--dataset", dataset_dir, "dataset directory")->required();
  cmd_heatmap->add_option("--spec", spec_path, "heatmap spec JSON (extent m, bins, scale, rotated, speed m/s)")->required();
  cmd_heatmap->add_option("--out", out_path, "output directory for .pgm/.csv (declared output)")->required();

  auto* cmd_scaling = app.add_subcommand("scaling", "Dataset-size scaling curve (prefix subsets)");
  cmd_scaling->add_option("--config", config_path, "experiment config JSON")->required();
  cmd_scaling->add_option("--fractions", fractions_csv, "comma-separated train fractions in (0,1]")->required();

  auto* cmd_compare = app.add_subcommand("compare", "Run several experiment arms and tabulate them");
  cmd_compare->add_option("--configs", configs_dir, "directory of experiment config JSON files")->required();

  auto* cmd_bench = app.add_subcommand("bench", "Per-pair runtime of a checkpoint on the val split");
  cmd_bench->add_option("--model", model_path, "student checkpoint (.zfck)")->required();
  cmd_bench->add_option("--dataset", dataset_dir, "dataset directory")->required();
  cmd_bench->add_option("--repeats", repeats, "timing passes; the first is warm-up (>= 3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);  // help goes to stdout, exit 0
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  ProgressPrinter progress;

  try {
    if (*cmd_generate) {
      ExperimentConfig cfg = load_experiment_config(config_path);
      if (gen_seed->count() > 0) {
        cfg.scene.seed = seed;
        cfg.dataset.train_seed = mix_seed(seed, 0xA11CE);
        cfg.dataset.val_seed = mix_seed(seed, 0xB0B);
        cfg.validate();
      }
      generate_dataset(out_path, "train", cfg.scene, cfg.dataset.train_n, cfg.dataset.diversity,
                       cfg.dataset.train_seed);
      progress("generate", 50);
      generate_dataset(out_path, "val", cfg.scene, cfg.dataset.val_n, cfg.dataset.diversity,
                       cfg.dataset.val_seed);
      progress("generate", 100);
      std::fprintf(stderr, "generated %zu train + %zu val samples under %s\n",
                   cfg.dataset.train_n, cfg.dataset.val_n, out_path.c_str());
    } else if (*cmd_pseudolabel) {
      PseudolabelRun run;
      run.kind = teacher_kind_from_string(teacher_name);
      run.global_seed = seed_or(pl_seed, seed, 0);
      run.jobs = jobs;
      const std::filesystem::path out = std::filesystem::path(dataset_dir) / "labels" / teacher_name;
      auto outcome = pseudolabel_dataset(dataset_dir, "train", out, run,
                                         [&](size_t done, size_t total) {
                                           progress("pseudolabel", static_cast<int>(100 * done / total));
                                         });
      std::fprintf(stderr, "labeled %zu pairs (%zu failures) into %s\n", outcome.n_ok,
                   outcome.failures.size(), out.string().c_str());
    } else if (*cmd_train) {
      ExperimentConfig cfg = load_experiment_config(config_path);
      StudentModel model = StudentModel::init(cfg.student.pillar,
                                              seed_or(tr_seed, seed, cfg.student.seed));
      TrainOptions opt;
      opt.lr = cfg.student.lr;
      opt.batch = cfg.student.batch;
      opt.epochs = cfg.student.epochs;
      opt.scheme = cfg.student.scheme;
      opt.seed = seed_or(tr_seed, seed, cfg.student.seed);
      opt.eval_crop_half_extent = cfg.eval.crop_half_extent;
      opt.skip_indices = read_label_failures(labels_dir);
      opt.on_epoch = [&](int e, int total) { progress("train", 100 * e / total); };
      auto log = train_student(model, dataset_dir, labels_dir, opt);
      model.save(out_path);
      write_epoch_log_csv(out_path + ".epochs.csv", log);
      std::fprintf(stderr, "trained %d epochs; checkpoint at %s\n", cfg.student.epochs,
                   out_path.c_str());
    } else if (*cmd_eval) {
      if (crop_m <= 0.0) throw std::runtime_error("--crop must be > 0 meters");
      StudentModel model = StudentModel::load(model_path);
      const ThreewayReport report =
          evaluate_on_split(StudentEstimator(model), dataset_dir, "val", crop_m / 2.0);
      write_report_csv(report_path, {{"student", report, std::numeric_limits<double>::quiet_NaN(),
                                      std::numeric_limits<double>::quiet_NaN()}});
      std::fprintf(stderr, "threeway_epe %.6f (dynamic %.6f, static %.6f, bg %.6f) -> %s\n",
                   report.threeway_epe, report.fg_dynamic_epe, report.fg_static_epe, report.bg_epe,
                   report_path.c_str());
      if (!report.all_buckets_present())
        std::fprintf(stderr, "warning: empty buckets excluded from the threeway mean\n");
    } else if (*cmd_heatmap) {
      StudentModel model = StudentModel::load(model_path);
      const HeatmapSpec spec = heatmap_spec_from_file(spec_path);
      const StudentEstimator est(model);
      const size_t n = count_samples(dataset_dir, "val");
      if (n == 0) throw std::runtime_error("no val samples under " + dataset_dir);
      Heatmap map;
      for (size_t i = 0; i < n; ++i) {
        const SceneSample s = read_scene_sample(sample_path(dataset_dir, "val", i));
        accumulate_residual_heatmap(map, est.estimate(s.cloud_t, s.cloud_t1), s.gt_flow,
                                    s.dt_seconds, spec);
        progress("heatmap", static_cast<int>(100 * (i + 1) / n));
      }
      std::filesystem::create_directories(out_path);
      const std::string stem = heatmap_stem("student", spec);
      write_heatmap_pgm(std::filesystem::path(out_path) / (stem + ".pgm"), map, spec.scale);
      write_heatmap_csv(std::filesystem::path(out_path) / (stem + ".csv"), map);
      if (map.empty()) std::fprintf(stderr, "warning: no moving points; heatmap is empty\n");
      std::fprintf(stderr, "heatmap (%llu in extent, %llu outside) -> %s/%s.{pgm,csv}\n",
                   static_cast<unsigned long long>(map.in_extent()),
                   static_cast<unsigned long long>(map.out_of_extent), out_path.c_str(),
                   stem.c_str());
    } else if (*cmd_scaling) {
      ExperimentConfig cfg = load_experiment_config(config_path);
      const auto points = run_scaling(cfg, parse_fractions(fractions_csv), std::ref(progress));
      const auto csv = cfg.out_dir / "scaling.csv";
      std::filesystem::create_directories(cfg.out_dir);
      write_scaling_csv(csv, points);
      std::fprintf(stderr, "scaling curve (%zu points) -> %s\n", points.size(), csv.string().c_str());
    } else if (*cmd_compare) {
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(configs_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      if (files.size() < 2)
        throw std::runtime_error("compare needs at least 2 config files in " + configs_dir);
      std::vector<ExperimentConfig> arms;
      for (const auto& f : files) arms.push_back(load_experiment_config(f));
      const auto csv = std::filesystem::path(configs_dir) / "compare.csv";
      const auto rows = compare_methods(arms, csv, std::ref(progress));
      std::fprintf(stderr, "compared %zu arms -> %s\n", rows.size(), csv.string().c_str());
    } else if (*cmd_bench) {
      if (repeats < 3) throw std::runtime_error("--repeats must be >= 3");
      StudentModel model = StudentModel::load(model_path);
      const size_t n = std::min<size_t>(20, count_samples(dataset_dir, "val"));
      if (n == 0) throw std::runtime_error("no val samples under " + dataset_dir);
      std::vector<SceneSample> samples;
      for (size_t i = 0; i < n; ++i)
        samples.push_back(read_scene_sample(sample_path(dataset_dir, "val", i)));
      const BenchResult r = bench_runtime(StudentEstimator(model), samples, repeats);
      std::printf("method,mean_ms,std_ms,n_timings\nstudent,%.6f,%.6f,%zu\n", r.mean_ms, r.std_ms,
                  r.n_timings);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
