#pragma once

#include <filesystem>
#include <functional>

#include "flow/core/estimator.hpp"
#include "flow/teacher/nsfp.hpp"

namespace flow {

enum class TeacherKind { Nsfp, Nn, Gt };

TeacherKind teacher_kind_from_string(const std::string& s);
std::string to_string(TeacherKind k);

// Pseudo-label file `ZFFL` v1: magic, u32 version, u32 count, f32 flow
// triples, f64 final_loss, u32 iters, u64 wall_time_ms.
void write_pseudolabel(const std::filesystem::path& path, const PseudoLabel& label);
PseudoLabel read_pseudolabel(const std::filesystem::path& path, const std::string& teacher_name = "");

std::filesystem::path label_path(const std::filesystem::path& labels_dir, size_t index);

struct PseudolabelRun {
  TeacherKind kind = TeacherKind::Nsfp;
  TeacherConfig nsfp;       // used when kind == Nsfp; chamfer also drives Nn
  uint64_t global_seed = 0; // per-sample seed is global_seed ^ sample_index
  int jobs = 1;
};

struct PseudolabelOutcome {
  size_t n_ok = 0;
  std::vector<std::pair<size_t, std::string>> failures;  // (index, error)
};

// Labels every sample of <dataset>/<split> into labels_dir. Output is
// independent of worker count and scheduling order. Per-sample failures are
// recorded in labels_dir/manifest.json and the run continues.
//
// The wall_time_ms field is zeroed in the files so outputs are byte-stable
// across runs; per-run timing belongs to logs, not label artifacts.
PseudolabelOutcome pseudolabel_dataset(const std::filesystem::path& dataset_dir,
                                       const std::string& split,
                                       const std::filesystem::path& labels_dir,
                                       const PseudolabelRun& run,
                                       const std::function<void(size_t, size_t)>& progress = {});

// Single-pair dispatch shared by the dataset runner and benchmarks.
PseudoLabel run_teacher(TeacherKind kind, const SceneSample& sample, const TeacherConfig& cfg);

// Failed sample indices recorded in labels_dir/manifest.json (empty when the
// manifest is absent).
std::vector<size_t> read_label_failures(const std::filesystem::path& labels_dir);

// Optimization-based estimators wrapped for benchmarking and comparison.
class NsfpEstimator final : public FlowEstimator {
 public:
  explicit NsfpEstimator(TeacherConfig cfg) : cfg_(std::move(cfg)) {}
  std::string name() const override { return "nsfp"; }
  FlowField estimate(const PointCloud& t, const PointCloud& t1) const override {
    return nsfp_optimize(t, t1, cfg_).flow;
  }

 private:
  TeacherConfig cfg_;
};

class NnTeacherEstimator final : public FlowEstimator {
 public:
  explicit NnTeacherEstimator(ChamferConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "nn"; }
  FlowField estimate(const PointCloud& t, const PointCloud& t1) const override {
    return nn_flow_teacher(t, t1, cfg_);
  }

 private:
  ChamferConfig cfg_;
};

}  // namespace flow
