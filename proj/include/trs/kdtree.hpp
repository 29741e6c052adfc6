#pragma once

#include "trs/common.hpp"

namespace trs {

// Static 3D k-d tree for nearest-neighbor distance queries. Median split,
// built once over an immutable point set; queries are const and thread-safe.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("KdTree: empty point set");
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = std::uint32_t(i);
    nodes_.reserve(points_.size());
    root_ = build(0, order_.size(), 0);
  }

  // Index of the nearest point and its squared distance.
  std::pair<std::uint32_t, Real> nearest(const Vec3& q) const {
    Best best{0, std::numeric_limits<Real>::infinity()};
    search(root_, q, best);
    return {best.index, best.dist_sq};
  }

  Real nearest_distance(const Vec3& q) const { return std::sqrt(nearest(q).second); }

 private:
  struct Node {
    std::uint32_t point;
    std::int32_t left = -1, right = -1;
    std::uint8_t axis;
  };
  struct Best {
    std::uint32_t index;
    Real dist_sq;
  };

  std::int32_t build(std::size_t begin, std::size_t end, int depth) {
    if (begin >= end) return -1;
    int axis = depth % 3;
    std::size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    Node node;
    node.point = order_[mid];
    node.axis = std::uint8_t(axis);
    std::int32_t id = std::int32_t(nodes_.size());
    nodes_.push_back(node);
    nodes_[id].left = build(begin, mid, depth + 1);
    nodes_[id].right = build(mid + 1, end, depth + 1);
    return id;
  }

  void search(std::int32_t id, const Vec3& q, Best& best) const {
    if (id < 0) return;
    const Node& node = nodes_[id];
    const Vec3& p = points_[node.point];
    Vec3 d = q - p;
    Real ds = dot(d, d);
    if (ds < best.dist_sq || (ds == best.dist_sq && node.point < best.index)) {
      best.dist_sq = ds;
      best.index = node.point;
    }
    Real delta = q[node.axis] - p[node.axis];
    std::int32_t near = delta < 0 ? node.left : node.right;
    std::int32_t far = delta < 0 ? node.right : node.left;
    search(near, q, best);
    if (delta * delta <= best.dist_sq) search(far, q, best);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace trs
