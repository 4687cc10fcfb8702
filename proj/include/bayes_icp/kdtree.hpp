#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "bayes_icp/error.hpp"
#include "bayes_icp/point_cloud.hpp"

namespace bayes_icp {

struct Neighbor {
  std::size_t index = 0;
  double sq_dist = std::numeric_limits<double>::infinity();
};

/// Exact Euclidean nearest-neighbor index over a fixed reference cloud.
///
/// Ties are broken toward the lowest point index, which makes results
/// identical to a linear scan. Immutable after construction; concurrent
/// queries are safe.
class NeighborIndex {
 public:
  static constexpr std::size_t kLeafSize = 8;

  explicit NeighborIndex(PointCloud reference) : cloud_(std::move(reference)) {
    if (cloud_.empty()) throw InvalidArgument("cannot index an empty cloud");
    order_.resize(cloud_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * cloud_.size() / kLeafSize + 1);
    build(0, order_.size());
  }

  const PointCloud& cloud() const { return cloud_; }
  std::size_t size() const { return cloud_.size(); }

  Neighbor nearest(const Eigen::Vector3d& q) const {
    Neighbor best;
    search(0, q, kNoExclusion, best);
    return best;
  }

  /// Nearest neighbor other than the reference point `excluded`.
  Neighbor nearest_excluding(const Eigen::Vector3d& q, std::size_t excluded) const {
    Neighbor best;
    search(0, q, excluded, best);
    return best;
  }

 private:
  static constexpr std::size_t kNoExclusion = std::numeric_limits<std::size_t>::max();
  static constexpr std::uint32_t kLeaf = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    std::uint32_t begin = 0, end = 0;  // range into order_
    std::uint32_t left = kLeaf, right = kLeaf;
    int axis = 0;
    double split = 0.0;
  };

  std::uint32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(cloud_[order_[i]]);
      hi = hi.cwiseMax(cloud_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return cloud_[a][axis] < cloud_[b][axis]; });
    const double split = cloud_[order_[mid]][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search(std::uint32_t id, const Eigen::Vector3d& q, std::size_t excluded,
              Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.left == kLeaf) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == excluded) continue;
        const double d = (cloud_[idx] - q).squaredNorm();
        if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) best = {idx, d};
      }
      return;
    }
    // Left subtree holds coordinates <= split, right holds >= split.
    const double diff = q[n.axis] - n.split;
    const std::uint32_t near = diff <= 0.0 ? n.left : n.right;
    const std::uint32_t far = diff <= 0.0 ? n.right : n.left;
    search(near, q, excluded, best);
    if (diff * diff <= best.sq_dist) search(far, q, excluded, best);
  }

  PointCloud cloud_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline NeighborIndex build_index(PointCloud reference) {
  return NeighborIndex(std::move(reference));
}

}  // namespace bayes_icp
