#pragma once

#include <filesystem>
#include <map>

#include "flow/core/io.hpp"
#include "flow/eval/reports.hpp"
#include "flow/student/train.hpp"
#include "flow/teacher/pseudolabel.hpp"

namespace flow {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Method { Student, ZeroFlow };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

// One experiment arm: dataset generation, pseudo-labeling, distillation and
// evaluation. Defaults are desk scale so a full CPU run finishes in minutes;
// paper-scale values are plain config entries.
struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path out_dir;
  Method method = Method::Student;

  SceneConfig scene;
  struct Dataset {
    size_t train_n = 200;
    size_t val_n = 30;
    Diversity diversity = Diversity::Diverse;
    uint64_t train_seed = 1;
    uint64_t val_seed = 1000001;
  } dataset;
  struct Teacher {
    TeacherKind kind = TeacherKind::Nsfp;
    TeacherConfig nsfp;
    uint64_t seed = 0;
  } teacher;
  struct Student {
    PillarConfig pillar = PillarConfig::desk_scale();
    double lr = 1e-3;
    int batch = 8;
    int epochs = 16;
    WeightScheme scheme = WeightScheme::Uniform;
    uint64_t seed = 3;
  } student;
  struct Eval {
    // Evaluation box scaled from the paper protocol (70/102.4 of the area).
    double crop_half_extent = 8.75;
  } eval;
  int jobs = 1;

  ExperimentConfig() {
    scene.area_half_extent = 12.8;
    scene.n_background_points = 500;
    scene.n_objects = 5;
    scene.object_size_range = {1.0, 3.0};
    scene.object_speed_range = {0.0, 8.0};
  }

  void validate() const;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct StageInfo {
  std::string hash_hex;
  bool cache_hit = false;
  double wall_ms = 0.0;
};

struct ExperimentResult {
  std::filesystem::path dataset_dir;
  std::filesystem::path labels_dir;   // empty for the zero-flow method
  std::filesystem::path ckpt_path;    // empty for the zero-flow method
  std::filesystem::path report_path;  // out_dir/report.csv
  ThreewayReport report;
  std::map<std::string, StageInfo> stages;
};

using StageProgress = std::function<void(const std::string& stage, int percent)>;

// Per-sample pseudo-label failures are tolerated up to 1% of the dataset;
// beyond that the labels stage aborts.
void enforce_label_failure_policy(const PseudolabelOutcome& outcome, size_t dataset_n);

// Runs the full loop with hash-keyed stage caching under
// FLOWDISTILL_CACHE_DIR (default <out_dir>/cache). Identical configs reuse
// cached stages byte-for-byte; corrupted cache contents are an error.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const StageProgress& progress = {});

// Runs every arm (all must share the identical val split and eval crop),
// benches each arm's estimator on the val split, and writes one combined CSV
// sorted by threeway_epe.
std::vector<MethodReportRow> compare_methods(const std::vector<ExperimentConfig>& arms,
                                             const std::filesystem::path& out_csv,
                                             const StageProgress& progress = {});

// Scaling runner: per fraction, trains on the prefix subset of the train
// split (identical seeds and val split) and evaluates. Used by the CLI
// `scaling` subcommand.
std::vector<ScalingPoint> run_scaling(const ExperimentConfig& cfg,
                                      const std::vector<double>& fractions,
                                      const StageProgress& progress = {});

}  // namespace flow
