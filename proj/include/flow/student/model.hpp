#pragma once

#include <filesystem>

#include "flow/nn/checkpoint.hpp"
#include "flow/nn/mlp.hpp"
#include "flow/student/pillars.hpp"

namespace flow {

// FastFlow3D-style estimator: shared pillar embedding, a U-Net whose encoder
// runs the two frames separately with shared weights and whose decoder fuses
// them, and a per-point MLP that decodes flow from the point's coordinates
// plus its pillar feature.
struct StudentModel {
  struct Conv {
    nn::Tensor w;  // [Co,Ci,K,K]
    nn::Tensor b;  // [Co]
  };
  struct DecoderLevel {
    nn::Tensor up_w;  // tconv2 weights [Ci,Co,2,2]
    Conv fuse;        // 3x3 over [up ++ skip_t ++ skip_t1]
  };

  PillarConfig config;
  nn::Mlp embed;                    // 4 -> embed_dim, ReLU applied before pooling
  std::vector<Conv> enc_in;         // level 0 stride 1, deeper levels stride 2
  std::vector<Conv> enc_refine;     // stride-1 refinement per level
  Conv mid;                         // joint bottleneck over both frames
  std::vector<DecoderLevel> dec;    // bottom-up, unet_levels-1 entries
  nn::Mlp decode;                   // (3 + embed_dim) -> 4*embed_dim -> 3

  static StudentModel init(const PillarConfig& cfg, uint64_t seed);

  int level_channels(int level) const { return config.embed_dim << level; }

  nn::NamedTensors named_params() const;
  void load_named_params(const nn::NamedTensors& params);

  void save(const std::filesystem::path& ckpt_path) const;  // + .json sidecar
  static StudentModel load(const std::filesystem::path& ckpt_path);
};

// Graph registration of every parameter (once per graph; shared across both
// frames so encoder gradients accumulate).
struct StudentNodes {
  nn::MlpNodes embed;
  std::vector<std::pair<nn::Graph::NodeId, nn::Graph::NodeId>> enc_in;      // (w,b)
  std::vector<std::pair<nn::Graph::NodeId, nn::Graph::NodeId>> enc_refine;  // (w,b)
  std::pair<nn::Graph::NodeId, nn::Graph::NodeId> mid;
  std::vector<std::pair<nn::Graph::NodeId, std::pair<nn::Graph::NodeId, nn::Graph::NodeId>>> dec;
  nn::MlpNodes decode;
};

StudentNodes register_student(nn::Graph& g, const StudentModel& m, bool requires_grad = true);

// Differentiable forward pass; returns the [N,3] flow node for cloud_t.
nn::Graph::NodeId student_forward_node(nn::Graph& g, const StudentModel& m,
                                       const StudentNodes& nodes, const PointCloud& cloud_t,
                                       const PointCloud& cloud_t1);

// Inference entry point.
FlowField student_forward(const StudentModel& m, const PointCloud& cloud_t,
                          const PointCloud& cloud_t1);

// The pooled pseudoimage of one cloud ([grid*grid, embed_dim] features plus
// the point-to-cell mapping), exposed for inspection and tests.
struct Pseudoimage {
  nn::Tensor features;
  std::vector<int> cell_of_point;
  int grid = 0;
};

Pseudoimage pillarize(const PointCloud& cloud, const StudentModel& m);

// Collects every (param tensor, grad node) pair in named_params order.
void collect_student_grads(nn::Graph& g, StudentModel& m, const StudentNodes& nodes,
                           std::vector<nn::Tensor*>& params, std::vector<const nn::Tensor*>& grads);

}  // namespace flow
