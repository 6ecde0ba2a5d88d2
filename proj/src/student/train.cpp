#include "flow/student/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "flow/core/io.hpp"
#include "flow/nn/adam.hpp"
#include "flow/teacher/pseudolabel.hpp"

namespace flow {

FlowField StudentEstimator::estimate(const PointCloud& cloud_t, const PointCloud& cloud_t1) const {
  const double he = model_->config.area_half_extent;
  for (const auto& p : cloud_t.points) {
    if (std::abs(p.x) > he || std::abs(p.y) > he)
      throw std::runtime_error(
          "student model/data config mismatch: cloud_t point outside the model's " +
          std::to_string(2 * he) + " m area");
  }
  PointCloud ctx;
  ctx.frame_id = cloud_t1.frame_id;
  for (const auto& p : cloud_t1.points)
    if (std::abs(p.x) <= he && std::abs(p.y) <= he) ctx.points.push_back(p);
  if (ctx.empty()) throw std::runtime_error("student estimate: cloud_t1 empty after area crop");
  return student_forward(*model_, cloud_t, ctx);
}

void TrainOptions::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("TrainOptions: lr must be > 0");
  if (batch < 1) throw std::invalid_argument("TrainOptions: batch must be >= 1");
  if (epochs < 0) throw std::invalid_argument("TrainOptions: epochs must be >= 0");
}

namespace {

struct TrainItem {
  SceneSample sample;
  FlowField label;
  std::vector<double> weights;
};

// Drops out-of-area points, keeping sample arrays and the label aligned.
TrainItem crop_item(SceneSample s, FlowField label, double he) {
  if (label.size() != s.cloud_t.size())
    throw std::runtime_error("label length does not match cloud_t");
  TrainItem out;
  out.sample.dt_seconds = s.dt_seconds;
  out.sample.cloud_t.frame_id = s.cloud_t.frame_id;
  out.sample.cloud_t1.frame_id = s.cloud_t1.frame_id;
  for (size_t i = 0; i < s.cloud_t.size(); ++i) {
    const Point3& p = s.cloud_t.points[i];
    if (std::abs(p.x) > he || std::abs(p.y) > he) continue;
    out.sample.cloud_t.points.push_back(p);
    out.sample.gt_flow.vectors.push_back(s.gt_flow.vectors[i]);
    out.sample.classes.push_back(s.classes[i]);
    out.label.vectors.push_back(label.vectors[i]);
  }
  for (const auto& p : s.cloud_t1.points)
    if (std::abs(p.x) <= he && std::abs(p.y) <= he) out.sample.cloud_t1.points.push_back(p);
  if (out.sample.cloud_t.empty() || out.sample.cloud_t1.empty())
    throw std::runtime_error("training sample empty after cropping to the model area");
  return out;
}

}  // namespace

std::vector<EpochLogRow> train_student(StudentModel& model,
                                       const std::filesystem::path& dataset_dir,
                                       const std::filesystem::path& labels_dir,
                                       const TrainOptions& opt) {
  opt.validate();
  const double he = model.config.area_half_extent;

  const size_t n_train = count_samples(dataset_dir, opt.train_split);
  if (n_train == 0)
    throw std::runtime_error("train_student: no samples under " +
                             (dataset_dir / opt.train_split).string());

  std::vector<TrainItem> items;
  items.reserve(n_train);
  for (size_t i = 0; i < n_train; ++i) {
    if (std::find(opt.skip_indices.begin(), opt.skip_indices.end(), i) != opt.skip_indices.end())
      continue;
    const auto lp = label_path(labels_dir, i);
    if (!std::filesystem::exists(lp))
      throw std::runtime_error("train_student: missing label file " + lp.string());
    SceneSample s = read_scene_sample(sample_path(dataset_dir, opt.train_split, i));
    PseudoLabel label = read_pseudolabel(lp);
    TrainItem item = crop_item(std::move(s), std::move(label.flow), he);
    item.weights = point_weights(opt.scheme, &item.sample.classes, item.label,
                                 item.sample.dt_seconds);
    items.push_back(std::move(item));
  }

  std::vector<EpochLogRow> log;
  if (opt.epochs == 0) return log;

  Rng shuffle_rng = Rng(opt.seed).fork(31);
  nn::AdamState adam;
  adam.lr = opt.lr;

  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t seen = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opt.batch)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(opt.batch));
      std::vector<nn::Tensor> grad_acc;
      std::vector<nn::Tensor*> params;
      double batch_loss = 0.0;

      for (size_t bi = start; bi < stop; ++bi) {
        const TrainItem& item = items[order[bi]];
        nn::Graph g;
        StudentNodes nodes = register_student(g, model, true);
        auto pred = student_forward_node(g, model, nodes, item.sample.cloud_t, item.sample.cloud_t1);
        auto loss = student_loss_node(g, pred, item.label, item.weights);
        const double loss_v = g.value(loss).v[0];
        if (!std::isfinite(loss_v))
          throw std::runtime_error("train_student: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(start / static_cast<size_t>(opt.batch)));
        batch_loss += loss_v;
        g.backward(loss);

        params.clear();
        std::vector<const nn::Tensor*> grads;
        collect_student_grads(g, model, nodes, params, grads);
        if (grad_acc.empty()) {
          grad_acc.reserve(grads.size());
          for (const nn::Tensor* gt : grads) grad_acc.push_back(*gt);
        } else {
          for (size_t p = 0; p < grads.size(); ++p)
            for (size_t j = 0; j < grad_acc[p].v.size(); ++j)
              grad_acc[p].v[j] += grads[p]->v[j];
        }
      }

      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& gt : grad_acc)
        for (double& x : gt.v) x *= inv;

      std::vector<const nn::Tensor*> grad_ptrs;
      grad_ptrs.reserve(grad_acc.size());
      for (const auto& gt : grad_acc) grad_ptrs.push_back(&gt);
      adam_step(params, grad_ptrs, adam);

      epoch_loss += batch_loss;
      seen += stop - start;
    }

    EpochLogRow row;
    row.epoch = epoch;
    row.train_loss = epoch_loss / static_cast<double>(seen);
    row.report = evaluate_on_split(StudentEstimator(model), dataset_dir, opt.eval_split,
                                   opt.eval_crop_half_extent);
    log.push_back(row);
    if (opt.on_epoch) opt.on_epoch(epoch, opt.epochs);
  }
  return log;
}

void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write epoch log: " + path.string());
  out << "epoch,threeway_epe,fg_dynamic,fg_static,bg,train_loss\n";
  char buf[200];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch,
                  r.report.threeway_epe, r.report.fg_dynamic_epe, r.report.fg_static_epe,
                  r.report.bg_epe, r.train_loss);
    out << buf;
  }
}

}  // namespace flow
