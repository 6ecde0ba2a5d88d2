#include "flow/neighbors/chamfer.hpp"

#include <optional>

namespace flow {

namespace {

PointCloud cloud_from_tensor(const nn::Tensor& t) {
  if (t.shape.size() != 2 || t.cols() != 3)
    throw std::invalid_argument("chamfer: point tensor must be [N,3], got " + t.shape_str());
  PointCloud c;
  c.points.resize(static_cast<size_t>(t.rows()));
  for (int i = 0; i < t.rows(); ++i) {
    c.points[static_cast<size_t>(i)] = {t.v[static_cast<size_t>(i) * 3 + 0],
                                        t.v[static_cast<size_t>(i) * 3 + 1],
                                        t.v[static_cast<size_t>(i) * 3 + 2]};
  }
  return c;
}

// Directed term: for each query, nearest hit in `tree`; squared distance or
// zero beyond the radius. Truncation compares squared distances, which is
// exact for non-negative radii.
double directed_sum(const std::vector<Point3>& queries, const KdTree& tree, double r2,
                    std::vector<KdTree::Hit>* hits_out) {
  std::vector<KdTree::Hit> hits;
  nearest_batch(tree, queries, hits);
  double acc = 0.0;
  for (const auto& h : hits) acc += h.squared_distance > r2 ? 0.0 : h.squared_distance;
  if (hits_out) *hits_out = std::move(hits);
  return acc;
}

}  // namespace

double truncated_chamfer(const PointCloud& a, const PointCloud& b, const ChamferConfig& cfg) {
  cfg.validate();
  if (a.empty() || b.empty()) throw std::invalid_argument("truncated_chamfer: empty cloud");
  const double r2 = cfg.truncation_radius * cfg.truncation_radius;
  KdTree tree_b(b);
  KdTree tree_a(a);
  const double term_ab = directed_sum(a.points, tree_b, r2, nullptr) / static_cast<double>(a.size());
  const double term_ba = directed_sum(b.points, tree_a, r2, nullptr) / static_cast<double>(b.size());
  return term_ab + term_ba;
}

nn::Graph::NodeId truncated_chamfer_node(nn::Graph& g, nn::Graph::NodeId a_points,
                                         const PointCloud& b, const ChamferConfig& cfg,
                                         const KdTree* b_tree) {
  cfg.validate();
  if (b.empty()) throw std::invalid_argument("truncated_chamfer: empty cloud B");
  const PointCloud a = cloud_from_tensor(g.value(a_points));
  if (a.empty()) throw std::invalid_argument("truncated_chamfer: empty cloud A");
  const double r2 = cfg.truncation_radius * cfg.truncation_radius;

  std::optional<KdTree> local_tree_b;
  if (!b_tree) local_tree_b.emplace(b);
  const KdTree& tb = b_tree ? *b_tree : *local_tree_b;

  KdTree ta(a);
  std::vector<KdTree::Hit> hits_ab, hits_ba;
  const double term_ab = directed_sum(a.points, tb, r2, &hits_ab) / static_cast<double>(a.size());
  const double term_ba = directed_sum(b.points, ta, r2, &hits_ba) / static_cast<double>(b.size());

  const double inv_a = 1.0 / static_cast<double>(a.size());
  const double inv_b = 1.0 / static_cast<double>(b.size());

  return g.custom(
      nn::Tensor::scalar(term_ab + term_ba), {a_points},
      [a_points, a, b, r2, inv_a, inv_b, hits_ab = std::move(hits_ab),
       hits_ba = std::move(hits_ba)](nn::Graph& gg, const nn::Tensor& gout) {
        if (!gg.requires_grad(a_points)) return;
        auto& ga = gg.grad_buffer(a_points).v;
        const double gv = gout.v[0];
        // d/da |a - b|^2 = 2 (a - b), surviving terms only.
        for (size_t i = 0; i < a.points.size(); ++i) {
          const auto& h = hits_ab[i];
          if (h.squared_distance > r2) continue;
          const Point3 diff = a.points[i] - b.points[static_cast<size_t>(h.index)];
          ga[i * 3 + 0] += gv * 2.0 * inv_a * diff.x;
          ga[i * 3 + 1] += gv * 2.0 * inv_a * diff.y;
          ga[i * 3 + 2] += gv * 2.0 * inv_a * diff.z;
        }
        for (size_t j = 0; j < b.points.size(); ++j) {
          const auto& h = hits_ba[j];
          if (h.squared_distance > r2) continue;
          const size_t i = static_cast<size_t>(h.index);
          const Point3 diff = a.points[i] - b.points[j];
          ga[i * 3 + 0] += gv * 2.0 * inv_b * diff.x;
          ga[i * 3 + 1] += gv * 2.0 * inv_b * diff.y;
          ga[i * 3 + 2] += gv * 2.0 * inv_b * diff.z;
        }
      });
}

FlowField nn_flow_teacher(const PointCloud& cloud_t, const PointCloud& cloud_t1,
                          const ChamferConfig& cfg) {
  cfg.validate();
  if (cloud_t.empty() || cloud_t1.empty())
    throw std::invalid_argument("nn_flow_teacher: empty cloud");
  const double r2 = cfg.truncation_radius * cfg.truncation_radius;
  KdTree tree(cloud_t1);
  std::vector<KdTree::Hit> hits;
  nearest_batch(tree, cloud_t.points, hits);
  FlowField flow = FlowField::zeros(cloud_t.size());
  for (size_t i = 0; i < cloud_t.size(); ++i) {
    if (hits[i].squared_distance > r2) continue;
    flow.vectors[i] = cloud_t1.points[static_cast<size_t>(hits[i].index)] - cloud_t.points[i];
  }
  return flow;
}

}  // namespace flow
