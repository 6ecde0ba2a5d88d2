#pragma once

#include <filesystem>
#include <functional>

#include "flow/eval/metrics.hpp"
#include "flow/student/loss.hpp"
#include "flow/student/model.hpp"

namespace flow {

// Wraps a model as an estimator. cloud_t must lie inside the model's area
// (config mismatch otherwise); out-of-area context points of cloud_t1 carry
// no labels and are dropped.
class StudentEstimator final : public FlowEstimator {
 public:
  explicit StudentEstimator(const StudentModel& model) : model_(&model) {}
  std::string name() const override { return "student"; }
  FlowField estimate(const PointCloud& cloud_t, const PointCloud& cloud_t1) const override;

 private:
  const StudentModel* model_;
};

struct TrainOptions {
  double lr = 2e-6;  // paper-scale default; desk experiments override
  int batch = 64;
  int epochs = 50;
  WeightScheme scheme = WeightScheme::Uniform;
  uint64_t seed = 0;
  std::string train_split = "train";
  std::string eval_split = "val";
  double eval_crop_half_extent = 0.0;  // 0 = every point
  // Samples whose labeling failed (from the labels manifest); they are left
  // out instead of tripping the missing-label error.
  std::vector<size_t> skip_indices;
  std::function<void(int, int)> on_epoch;  // (finished epoch, total)

  void validate() const;
};

struct EpochLogRow {
  int epoch = 0;
  ThreewayReport report;  // held-out split
  double train_loss = 0.0;
};

// Distillation step: seeded per-epoch shuffling, batch-averaged gradients,
// one Adam step per batch, held-out Threeway EPE per epoch. Deterministic
// for a fixed seed. Every train sample must have a label file.
std::vector<EpochLogRow> train_student(StudentModel& model,
                                       const std::filesystem::path& dataset_dir,
                                       const std::filesystem::path& labels_dir,
                                       const TrainOptions& opt);

// epoch,threeway_epe,fg_dynamic,fg_static,bg,train_loss
void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLogRow>& log);

}  // namespace flow
