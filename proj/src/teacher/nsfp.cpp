#include "flow/teacher/nsfp.hpp"

#include <chrono>

#include "flow/nn/adam.hpp"

namespace flow {

void TeacherConfig::validate() const {
  if (mlp_widths.size() < 2 || mlp_widths.front() != 3 || mlp_widths.back() != 3)
    throw std::invalid_argument("TeacherConfig: mlp_widths must start and end at 3");
  if (max_iters < 1) throw std::invalid_argument("TeacherConfig: max_iters must be >= 1");
  if (early_stop_patience < 1) throw std::invalid_argument("TeacherConfig: patience must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("TeacherConfig: lr must be > 0");
  chamfer.validate();
}

namespace {

nn::Tensor tensor_from_cloud(const PointCloud& c) {
  nn::Tensor t = nn::Tensor::zeros({static_cast<int>(c.size()), 3});
  for (size_t i = 0; i < c.size(); ++i) {
    t.v[i * 3 + 0] = c.points[i].x;
    t.v[i * 3 + 1] = c.points[i].y;
    t.v[i * 3 + 2] = c.points[i].z;
  }
  return t;
}

FlowField flow_from_tensor(const nn::Tensor& t) {
  FlowField f = FlowField::zeros(static_cast<size_t>(t.rows()));
  for (int i = 0; i < t.rows(); ++i) {
    f.vectors[static_cast<size_t>(i)] = {t.v[static_cast<size_t>(i) * 3 + 0],
                                         t.v[static_cast<size_t>(i) * 3 + 1],
                                         t.v[static_cast<size_t>(i) * 3 + 2]};
  }
  return f;
}

}  // namespace

PseudoLabel nsfp_optimize(const PointCloud& cloud_t, const PointCloud& cloud_t1,
                          const TeacherConfig& cfg) {
  cfg.validate();
  if (cloud_t.empty() || cloud_t1.empty())
    throw std::invalid_argument("nsfp_optimize: empty input cloud");

  const auto start = std::chrono::steady_clock::now();

  Rng rng(cfg.seed);
  Rng rng_fwd = rng.fork(11);
  Rng rng_bwd = rng.fork(12);
  nn::Mlp f_fwd = nn::Mlp::init(cfg.mlp_widths, cfg.activation, rng_fwd);
  nn::Mlp f_bwd = nn::Mlp::init(cfg.mlp_widths, cfg.activation, rng_bwd);

  const KdTree tree_t1(cloud_t1);
  const KdTree tree_t(cloud_t);
  const nn::Tensor pts_tensor = tensor_from_cloud(cloud_t);

  // Zero flow seeds the best tracker: the warped cloud is cloud_t itself and
  // the cycle term vanishes.
  PseudoLabel best;
  best.teacher_name = "nsfp";
  best.flow = FlowField::zeros(cloud_t.size());
  best.final_loss = truncated_chamfer(cloud_t, cloud_t1, cfg.chamfer);
  best.cycle_loss = 0.0;

  nn::AdamState adam;
  adam.lr = cfg.lr;
  EarlyStopper stopper(cfg.early_stop_patience, cfg.early_stop_min_delta);

  uint32_t iters = 0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    nn::Graph g;
    const auto pts = g.leaf(pts_tensor, false);
    const nn::MlpNodes nodes_fwd = register_mlp(g, f_fwd);
    const nn::MlpNodes nodes_bwd = register_mlp(g, f_bwd);

    const auto flow_fwd = mlp_forward(g, f_fwd, nodes_fwd, pts);
    const auto warped = g.add(pts, flow_fwd);
    const auto cd_fwd = truncated_chamfer_node(g, warped, cloud_t1, cfg.chamfer, &tree_t1);

    const auto flow_bwd = mlp_forward(g, f_bwd, nodes_bwd, warped);
    const auto cycled = g.add(warped, flow_bwd);
    const auto cd_cycle = truncated_chamfer_node(g, cycled, cloud_t, cfg.chamfer, &tree_t);

    const auto loss = g.add(cd_fwd, cd_cycle);
    const double loss_v = g.value(loss).v[0];
    ++iters;
    if (!std::isfinite(loss_v))
      throw std::runtime_error("nsfp_optimize: non-finite loss (diverged) at iteration " +
                               std::to_string(it));

    if (loss_v < best.final_loss) {
      best.final_loss = loss_v;
      best.cycle_loss = g.value(cd_cycle).v[0];
      best.flow = flow_from_tensor(g.value(flow_fwd));
    }

    if (stopper.should_stop(loss_v)) break;

    g.backward(loss);
    std::vector<nn::Tensor*> params;
    std::vector<const nn::Tensor*> grads;
    auto collect = [&](nn::Mlp& mlp, const nn::MlpNodes& nodes) {
      for (size_t l = 0; l < mlp.n_layers(); ++l) {
        params.push_back(&mlp.weights[l]);
        grads.push_back(&g.grad(nodes.w[l]));
        params.push_back(&mlp.biases[l]);
        grads.push_back(&g.grad(nodes.b[l]));
      }
    };
    collect(f_fwd, nodes_fwd);
    collect(f_bwd, nodes_bwd);
    adam_step(params, grads, adam);
  }

  best.iters_run = iters;
  best.wall_time_ms = static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                std::chrono::steady_clock::now() - start)
                                                .count());
  return best;
}

}  // namespace flow
