#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <numeric>
#include <queue>
#include <vector>

namespace atlas {

/// Static k-d tree over the rows of a point matrix (copied) for fixed-radius and
/// k-nearest-neighbor queries.
class KdTree {
public:
  struct Neighbor {
    std::size_t index;
    double dist2;
  };

  explicit KdTree(Eigen::MatrixXd points, std::size_t leaf_size = 16)
      : points_(std::move(points)), leaf_size_(leaf_size) {
    order_.resize(static_cast<std::size_t>(points_.rows()));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }

  /// All points with squared distance <= radius^2, sorted by index.
  std::vector<Neighbor> radius_search(const Eigen::Ref<const Eigen::RowVectorXd>& q, double radius) const {
    std::vector<Neighbor> out;
    if (!nodes_.empty()) radius_rec(0, q, radius * radius, out);
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
    return out;
  }

  /// The k nearest points, sorted by distance (ties by index).
  std::vector<Neighbor> nearest(const Eigen::Ref<const Eigen::RowVectorXd>& q, std::size_t k) const {
    auto worse = [](const Neighbor& a, const Neighbor& b) {
      return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    };
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(worse);
    if (!nodes_.empty() && k > 0) knn_rec(0, q, k, heap);
    std::vector<Neighbor> out;
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

private:
  struct Node {
    std::size_t begin, end;
    Eigen::Index axis = -1;  // -1: leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
    Eigen::RowVectorXd lo, hi;  // bounding box
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end, -1, 0.0, 0, 0, {}, {}});
    Eigen::RowVectorXd lo = points_.row(static_cast<Eigen::Index>(order_[begin]));
    Eigen::RowVectorXd hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_.row(static_cast<Eigen::Index>(order_[i])));
      hi = hi.cwiseMax(points_.row(static_cast<Eigen::Index>(order_[i])));
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= leaf_size_) return id;
    Eigen::Index axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi(axis) - lo(axis) <= 0.0) return id;  // all points coincide
    const std::size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       const double pa = points_(static_cast<Eigen::Index>(a), axis);
                       const double pb = points_(static_cast<Eigen::Index>(b), axis);
                       return pa < pb || (pa == pb && a < b);
                     });
    nodes_[id].axis = axis;
    nodes_[id].split = points_(static_cast<Eigen::Index>(order_[mid]), axis);
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static double box_dist2(const Node& n, const Eigen::Ref<const Eigen::RowVectorXd>& q) {
    double d = 0.0;
    for (Eigen::Index a = 0; a < q.size(); ++a) {
      const double e = q(a) < n.lo(a) ? n.lo(a) - q(a) : (q(a) > n.hi(a) ? q(a) - n.hi(a) : 0.0);
      d += e * e;
    }
    return d;
  }

  double dist2(std::size_t i, const Eigen::Ref<const Eigen::RowVectorXd>& q) const {
    return (points_.row(static_cast<Eigen::Index>(i)) - q).squaredNorm();
  }

  void radius_rec(std::size_t id, const Eigen::Ref<const Eigen::RowVectorXd>& q, double r2,
                  std::vector<Neighbor>& out) const {
    const Node& n = nodes_[id];
    if (box_dist2(n, q) > r2) return;
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const double d = dist2(order_[i], q);
        if (d <= r2) out.push_back({order_[i], d});
      }
      return;
    }
    radius_rec(n.left, q, r2, out);
    radius_rec(n.right, q, r2, out);
  }

  template <class Heap>
  void knn_rec(std::size_t id, const Eigen::Ref<const Eigen::RowVectorXd>& q, std::size_t k, Heap& heap) const {
    const Node& n = nodes_[id];
    if (heap.size() == k && box_dist2(n, q) > heap.top().dist2) return;
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        Neighbor cand{order_[i], dist2(order_[i], q)};
        if (heap.size() < k) heap.push(cand);
        else if (cand.dist2 < heap.top().dist2 ||
                 (cand.dist2 == heap.top().dist2 && cand.index < heap.top().index)) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const bool go_left = q(n.axis) < n.split;
    knn_rec(go_left ? n.left : n.right, q, k, heap);
    knn_rec(go_left ? n.right : n.left, q, k, heap);
  }

  Eigen::MatrixXd points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace atlas
