#pragma once

#include "flow/core/types.hpp"

namespace flow {

// Balanced 3-D index over an immutable snapshot of a cloud. Queries return
// the exact nearest point; ties break to the lowest point index, so results
// match a linear scan bit for bit. Safe for concurrent queries.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud);

  struct Hit {
    int index = -1;
    double squared_distance = 0.0;
  };

  Hit nearest(const Point3& q) const;
  size_t size() const { return pts_.size(); }

 private:
  struct Node {
    int axis = -1;        // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  int build(int begin, int end);
  void search(int node, const Point3& q, Hit& best) const;

  std::vector<Point3> pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Exact nearest neighbor for every query; parallel variant is bitwise
// identical to the serial one (per-query results are independent).
void nearest_batch_serial(const KdTree& tree, const std::vector<Point3>& queries,
                          std::vector<KdTree::Hit>& out);
void nearest_batch_parallel(const KdTree& tree, const std::vector<Point3>& queries,
                            std::vector<KdTree::Hit>& out);
void nearest_batch(const KdTree& tree, const std::vector<Point3>& queries,
                   std::vector<KdTree::Hit>& out);

}  // namespace flow
