#pragma once

#include <functional>
#include <vector>

#include "flow/nn/tensor.hpp"

namespace flow::nn {

// Append-only tape of tensor ops. Reverse iteration of the tape is a
// topological order, so backward() touches every node exactly once and
// accumulates gradients for diamond-shaped graphs correctly.
//
// A Graph is single-threaded; distinct graphs may live on distinct threads.
class Graph {
 public:
  using NodeId = int32_t;

  NodeId leaf(Tensor value, bool requires_grad = false);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId scale(NodeId a, double s);
  NodeId add_rowvec(NodeId a, NodeId row);   // [N,C] + [C]
  NodeId add_chanvec(NodeId a, NodeId chan); // [C,H,W] + [C]
  NodeId matmul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId square(NodeId a);
  NodeId sqrt_op(NodeId a);
  NodeId clamp_min(NodeId a, double lo);
  NodeId concat(const std::vector<NodeId>& parts, int axis);
  NodeId gather_rows(NodeId a, std::vector<int> rows);
  NodeId reduce_sum(NodeId a);
  NodeId reduce_mean(NodeId a);
  NodeId conv2d(NodeId x, NodeId w, int stride, int pad);
  NodeId tconv2(NodeId x, NodeId w);  // kernel 2, stride 2 upsampling
  // [H*W,C] -> [C,H,W] and back.
  NodeId rows_to_chw(NodeId a, int h, int w);
  NodeId chw_to_rows(NodeId a);
  // Per-cell max pool of row features; cells with no rows stay zero.
  // Gradient flows to the first row attaining each cell/channel max.
  NodeId scatter_max(NodeId rows, std::vector<int> cell_of_row, int n_cells);

  // Extension point for ops with external data (e.g. the Chamfer distance).
  // `backward` receives the upstream gradient of the node and must add into
  // the input gradients via grad_buffer().
  NodeId custom(Tensor value, std::vector<NodeId> inputs,
                std::function<void(Graph&, const Tensor& gout)> backward);

  const Tensor& value(NodeId id) const { return nodes_.at(static_cast<size_t>(id)).value; }

  // Gradient of the last backward() w.r.t. node id (zeros if unreachable).
  const Tensor& grad(NodeId id);

  // Accumulation buffer for node id, lazily allocated to the node's shape.
  Tensor& grad_buffer(NodeId id);

  bool requires_grad(NodeId id) const { return nodes_.at(static_cast<size_t>(id)).requires_grad; }

  // Reverse pass from a scalar loss.
  void backward(NodeId loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    bool requires_grad = false;
    std::function<void(Graph&, const Tensor& gout)> backprop;
  };

  NodeId emit(Tensor value, bool requires_grad,
              std::function<void(Graph&, const Tensor& gout)> backprop);
  bool any_requires(const std::vector<NodeId>& ids) const;

  std::vector<Node> nodes_;
};

}  // namespace flow::nn
