#pragma once

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "bayes_icp/error.hpp"
#include "bayes_icp/geometry.hpp"
#include "bayes_icp/kdtree.hpp"
#include "bayes_icp/point_cloud.hpp"
#include "bayes_icp/random.hpp"

namespace bayes_icp {

struct Correspondence {
  Eigen::Vector3d source;       // batch point before the pose is applied
  Eigen::Vector3d transformed;  // R * source + u
  Eigen::Vector3d reference;    // exact nearest reference point
  std::size_t reference_index = 0;
  double sq_dist = 0.0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
  std::size_t batch_size = 0;  // points offered before distance gating

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  double total_sq_dist() const {
    double s = 0.0;
    for (const auto& c : pairs) s += c.sq_dist;
    return s;
  }
};

/// Draws m points uniformly with replacement.
inline PointCloud sample_minibatch(const PointCloud& src, std::size_t m, Rng& rng) {
  if (src.empty()) throw InvalidArgument("cannot sample a mini-batch from an empty cloud");
  if (m == 0) throw InvalidArgument("mini-batch size must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);
  PointCloud batch;
  batch.points.reserve(m);
  for (std::size_t i = 0; i < m; ++i) batch.points.push_back(src[pick(rng)]);
  return batch;
}

/// Transforms the batch by `pose` and pairs every point with its nearest
/// reference point. With `max_dist` set, pairs farther than it are dropped;
/// if none survive DegenerateAssociation is thrown.
inline CorrespondenceSet associate(const PointCloud& batch, const RigidTransform& transform,
                                   const NeighborIndex& index,
                                   std::optional<double> max_dist = std::nullopt) {
  if (batch.empty()) throw InvalidArgument("cannot associate an empty batch");
  CorrespondenceSet set;
  set.batch_size = batch.size();
  set.pairs.reserve(batch.size());
  const double gate = max_dist ? (*max_dist) * (*max_dist)
                               : std::numeric_limits<double>::infinity();
  for (const auto& s : batch.points) {
    const Eigen::Vector3d moved = transform * s;
    const Neighbor nn = index.nearest(moved);
    if (nn.sq_dist > gate) continue;
    set.pairs.push_back({s, moved, index.cloud()[nn.index], nn.index, nn.sq_dist});
  }
  if (set.pairs.empty())
    throw DegenerateAssociation("all " + std::to_string(batch.size()) +
                                " pairs exceeded the distance gate");
  return set;
}

inline CorrespondenceSet associate(const PointCloud& batch, const Pose6& pose,
                                   const NeighborIndex& index,
                                   std::optional<double> max_dist = std::nullopt) {
  return associate(batch, pose_to_transform(pose), index, max_dist);
}

/// Mean distance from each point to its nearest distinct neighbor in the same
/// cloud.
inline double mean_nn_spacing(const NeighborIndex& index) {
  const auto& cloud = index.cloud();
  if (cloud.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    sum += std::sqrt(index.nearest_excluding(cloud[i], i).sq_dist);
  return sum / double(cloud.size());
}

/// Symmetric Chamfer distance: average of the two directed mean
/// nearest-neighbor distances.
inline double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("chamfer distance of an empty cloud");
  const NeighborIndex ia(a), ib(b);
  double ab = 0.0, ba = 0.0;
  for (const auto& p : a.points) ab += std::sqrt(ib.nearest(p).sq_dist);
  for (const auto& p : b.points) ba += std::sqrt(ia.nearest(p).sq_dist);
  return 0.5 * (ab / double(a.size()) + ba / double(b.size()));
}

}  // namespace bayes_icp
