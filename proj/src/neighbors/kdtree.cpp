#include "flow/neighbors/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "flow/nn/kernels.hpp"

namespace flow {

namespace {
constexpr int kLeafSize = 12;

double coord(const Point3& p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }
}  // namespace

KdTree::KdTree(const PointCloud& cloud) : pts_(cloud.points) {
  if (pts_.empty()) throw std::invalid_argument("KdTree: empty cloud");
  order_.resize(pts_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * pts_.size() / kLeafSize + 2);
  root_ = build(0, static_cast<int>(pts_.size()));
}

int KdTree::build(int begin, int end) {
  Node n;
  n.begin = begin;
  n.end = end;
  if (end - begin <= kLeafSize) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size() - 1);
  }

  // Split on the axis with the largest spread.
  Point3 lo = pts_[static_cast<size_t>(order_[begin])];
  Point3 hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    const Point3& p = pts_[static_cast<size_t>(order_[i])];
    lo.x = std::min(lo.x, p.x); hi.x = std::max(hi.x, p.x);
    lo.y = std::min(lo.y, p.y); hi.y = std::max(hi.y, p.y);
    lo.z = std::min(lo.z, p.z); hi.z = std::max(hi.z, p.z);
  }
  const double sx = hi.x - lo.x, sy = hi.y - lo.y, sz = hi.z - lo.z;
  int axis = 0;
  if (sy > sx && sy >= sz) axis = 1;
  else if (sz > sx && sz > sy) axis = 2;

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double ca = coord(pts_[static_cast<size_t>(a)], axis);
                     const double cb = coord(pts_[static_cast<size_t>(b)], axis);
                     return ca < cb || (ca == cb && a < b);
                   });

  n.axis = axis;
  n.split = coord(pts_[static_cast<size_t>(order_[mid])], axis);
  nodes_.push_back(n);
  const int self = static_cast<int>(nodes_.size() - 1);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<size_t>(self)].left = left;
  nodes_[static_cast<size_t>(self)].right = right;
  return self;
}

void KdTree::search(int node, const Point3& q, Hit& best) const {
  const Node& n = nodes_[static_cast<size_t>(node)];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int idx = order_[static_cast<size_t>(i)];
      const double d2 = squared_dist(q, pts_[static_cast<size_t>(idx)]);
      if (d2 < best.squared_distance ||
          (d2 == best.squared_distance && idx < best.index)) {
        best.squared_distance = d2;
        best.index = idx;
      }
    }
    return;
  }
  const double diff = coord(q, n.axis) - n.split;
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best);
  // <= keeps equidistant candidates reachable so the index tie-break stays exact.
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Point3& q) const {
  Hit best;
  best.index = -1;
  best.squared_distance = std::numeric_limits<double>::infinity();
  search(root_, q, best);
  return best;
}

void nearest_batch_serial(const KdTree& tree, const std::vector<Point3>& queries,
                          std::vector<KdTree::Hit>& out) {
  out.resize(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) out[i] = tree.nearest(queries[i]);
}

void nearest_batch_parallel(const KdTree& tree, const std::vector<Point3>& queries,
                            std::vector<KdTree::Hit>& out) {
  out.resize(queries.size());
  const int n = static_cast<int>(queries.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = tree.nearest(queries[static_cast<size_t>(i)]);
}

void nearest_batch(const KdTree& tree, const std::vector<Point3>& queries,
                   std::vector<KdTree::Hit>& out) {
  // Batches below a few thousand queries finish faster than an OpenMP
  // worker wake-up on some hosts.
  if (nn::kernels::parallel_enabled() && queries.size() >= 4096)
    nearest_batch_parallel(tree, queries, out);
  else
    nearest_batch_serial(tree, queries, out);
}

}  // namespace flow
