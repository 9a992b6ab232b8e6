#pragma once

#include <algorithm>
#include <queue>
#include <vector>

#include "fusegeom/common.hpp"

namespace fusegeom {

/// Exact k-d tree over 3D points for k-nearest-neighbor queries.
/// Built once, read-only afterwards; queries are safe to issue from
/// multiple threads concurrently.
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Eigen::Vector3d> points)
      : points_(std::move(points)), indices_(points_.size()) {
    for (std::size_t i = 0; i < indices_.size(); ++i) indices_[i] = i;
    if (!points_.empty()) root_ = build(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }

  struct Neighbor {
    std::size_t index;
    double distance;
  };

  /// The k nearest neighbors of q, closest first. Returns fewer than k
  /// when the tree is smaller.
  std::vector<Neighbor> knn(const Eigen::Vector3d& q, std::size_t k) const {
    Heap heap;
    if (root_ >= 0 && k > 0) search(root_, q, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = {heap.top().second, std::sqrt(heap.top().first)};
      heap.pop();
    }
    return out;
  }

  /// Mean Euclidean distance from q to its k nearest neighbors.
  double mean_knn_distance(const Eigen::Vector3d& q, std::size_t k) const {
    const auto nbrs = knn(q, k);
    if (nbrs.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& n : nbrs) acc += n.distance;
    return acc / static_cast<double>(nbrs.size());
  }

 private:
  struct Node {
    std::size_t begin, end;  // leaf: index range; internal: unused
    int left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };
  using Heap =
      std::priority_queue<std::pair<double, std::size_t>>;  // (dist^2, idx)

  static constexpr std::size_t kLeafSize = 16;

  int build(std::size_t begin, std::size_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= kLeafSize) {
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    // Split on the widest dimension at the median.
    Eigen::Vector3d lo = points_[indices_[begin]], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[indices_[i]]);
      hi = hi.cwiseMax(points_[indices_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid,
                     indices_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    node.axis = axis;
    node.split = points_[indices_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search(int node_id, const Eigen::Vector3d& q, std::size_t k,
              Heap& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const double d2 = (points_[indices_[i]] - q).squaredNorm();
        if (heap.size() < k) {
          heap.emplace(d2, indices_[i]);
        } else if (d2 < heap.top().first) {
          heap.pop();
          heap.emplace(d2, indices_[i]);
        }
      }
      return;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    if (heap.size() < k || delta * delta < heap.top().first)
      search(far, q, k, heap);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> indices_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace fusegeom
