#pragma once

#include "flow/neighbors/kdtree.hpp"
#include "flow/nn/graph.hpp"

namespace flow {

struct ChamferConfig {
  double truncation_radius = 2.0;  // meters; terms beyond it contribute zero

  void validate() const {
    if (truncation_radius <= 0.0)
      throw std::invalid_argument("ChamferConfig: truncation_radius must be > 0");
  }
};

// Bidirectional truncated Chamfer distance: mean over A of squared nearest
// distance into B (zeroed where the unsquared distance exceeds the radius)
// plus the symmetric mean over B.
double truncated_chamfer(const PointCloud& a, const PointCloud& b, const ChamferConfig& cfg);

// Graph form, differentiable w.r.t. the [N,3] tensor `a_points`; B is a fixed
// observation. Gradient flows only through surviving (untruncated) terms.
// Pass `b_tree` to reuse an index over B across iterations.
nn::Graph::NodeId truncated_chamfer_node(nn::Graph& g, nn::Graph::NodeId a_points,
                                         const PointCloud& b, const ChamferConfig& cfg,
                                         const KdTree* b_tree = nullptr);

// NearestNeighbor pseudo-label baseline: flow to the nearest point of
// cloud_t1 when within the truncation radius, zero otherwise.
FlowField nn_flow_teacher(const PointCloud& cloud_t, const PointCloud& cloud_t1,
                          const ChamferConfig& cfg = {});

}  // namespace flow
