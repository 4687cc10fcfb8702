#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace bayes_icp {

/// Ordered list of 3D points in meters.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::string name;

  PointCloud() = default;
  explicit PointCloud(std::vector<Eigen::Vector3d> pts, std::string label = {})
      : points(std::move(pts)), name(std::move(label)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  const Eigen::Vector3d& operator[](std::size_t i) const { return points[i]; }
  Eigen::Vector3d& operator[](std::size_t i) { return points[i]; }

  bool all_finite() const {
    for (const auto& p : points)
      if (!p.allFinite()) return false;
    return true;
  }

  Eigen::Vector3d centroid() const {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& p : points) c += p;
    return points.empty() ? c : Eigen::Vector3d(c / double(points.size()));
  }
};

}  // namespace bayes_icp
