#pragma once

// Synthetic test objects covering both symmetry classes:
//   can, bowl            rotationally symmetric about z (yaw unobservable)
//   mug-with-handle, table  fully constrained
//
// Each primitive receives a share of the points proportional to its area and
// is sampled area-uniformly with Latin-hypercube stratification of its
// parameter square. (A rank-1 lattice is more even, but two lattice clouds
// share a near-periodic structure that gives ICP spurious minima at lattice
// translations.)

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bayes_icp/error.hpp"
#include "bayes_icp/point_cloud.hpp"
#include "bayes_icp/random.hpp"

namespace bayes_icp {

enum class Shape { kBowl, kCan, kMugWithHandle, kTable };

inline constexpr std::array<std::string_view, 4> kShapeNames = {"bowl", "can",
                                                                "mug-with-handle", "table"};

inline std::string_view shape_name(Shape s) { return kShapeNames[static_cast<int>(s)]; }

inline std::string valid_shape_list() {
  std::string out;
  for (auto n : kShapeNames) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

inline Shape parse_shape(std::string_view name) {
  for (std::size_t i = 0; i < kShapeNames.size(); ++i)
    if (kShapeNames[i] == name) return static_cast<Shape>(i);
  throw InvalidArgument("unknown shape '" + std::string(name) +
                        "'; valid shapes: " + valid_shape_list());
}

struct SyntheticSpec {
  Shape shape = Shape::kCan;
  std::size_t point_count = 2000;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

namespace shapes {
inline constexpr double kCanRadius = 0.033;
inline constexpr double kCanHeight = 0.12;
inline constexpr double kBowlRadius = 0.08;
inline constexpr double kMugRadius = 0.04;
inline constexpr double kMugHeight = 0.10;
inline constexpr double kHandleMajor = 0.035;  // arc radius of the handle
inline constexpr double kHandleMinor = 0.008;  // tube radius of the handle
inline constexpr double kTableLength = 1.0;
inline constexpr double kTableWidth = 0.6;
}  // namespace shapes

namespace detail {

struct Primitive {
  double area;
  // Maps (u, v) in [0,1)^2 to a surface point, area-uniformly.
  std::function<Eigen::Vector3d(double, double)> map;
};

inline Primitive cylinder_side(double r, double z0, double z1) {
  return {2.0 * std::numbers::pi * r * (z1 - z0), [=](double u, double v) {
            const double a = 2.0 * std::numbers::pi * u;
            return Eigen::Vector3d(r * std::cos(a), r * std::sin(a), z0 + v * (z1 - z0));
          }};
}

inline Primitive disk(double r, double z) {
  return {std::numbers::pi * r * r, [=](double u, double v) {
            const double rho = r * std::sqrt(u);
            const double a = 2.0 * std::numbers::pi * v;
            return Eigen::Vector3d(rho * std::cos(a), rho * std::sin(a), z);
          }};
}

// Lower hemisphere of a sphere centered at the origin: z uniform in [-r, 0]
// gives area-uniform samples (Archimedes).
inline Primitive hemisphere_bowl(double r) {
  return {2.0 * std::numbers::pi * r * r, [=](double u, double v) {
            const double z = -r * u;
            const double rho = std::sqrt(std::max(0.0, r * r - z * z));
            const double a = 2.0 * std::numbers::pi * v;
            return Eigen::Vector3d(rho * std::cos(a), rho * std::sin(a), z);
          }};
}

// Half-torus handle in the xz-plane attached at x = attach_x.
inline Primitive handle_arc(double attach_x, double major, double minor) {
  const double area = 2.0 * std::numbers::pi * minor * std::numbers::pi * major;
  return {area, [=](double u, double v) {
            const double phi = std::numbers::pi * (u - 0.5);
            // Inverse CDF of the tube angle with density ∝ (major + minor cos psi).
            const double target = 2.0 * std::numbers::pi * major * v;
            double psi = 2.0 * std::numbers::pi * v;
            for (int it = 0; it < 30; ++it) {
              const double f = major * psi + minor * std::sin(psi) - target;
              const double df = major + minor * std::cos(psi);
              psi -= f / df;
            }
            const Eigen::Vector3d radial(std::cos(phi), 0.0, std::sin(phi));
            const Eigen::Vector3d center = Eigen::Vector3d(attach_x, 0.0, 0.0) + major * radial;
            return Eigen::Vector3d(center + minor * (std::cos(psi) * radial +
                                                     std::sin(psi) * Eigen::Vector3d::UnitY()));
          }};
}

inline Primitive rectangle(double lx, double ly) {
  return {lx * ly, [=](double u, double v) {
            return Eigen::Vector3d((u - 0.5) * lx, (v - 0.5) * ly, 0.0);
          }};
}

inline std::vector<Primitive> primitives_for(Shape shape) {
  using namespace shapes;
  switch (shape) {
    case Shape::kCan:
      return {cylinder_side(kCanRadius, -0.5 * kCanHeight, 0.5 * kCanHeight),
              disk(kCanRadius, -0.5 * kCanHeight), disk(kCanRadius, 0.5 * kCanHeight)};
    case Shape::kBowl:
      return {hemisphere_bowl(kBowlRadius)};
    case Shape::kMugWithHandle:
      return {cylinder_side(kMugRadius, -0.5 * kMugHeight, 0.5 * kMugHeight),
              disk(kMugRadius, -0.5 * kMugHeight),
              handle_arc(kMugRadius, kHandleMajor, kHandleMinor)};
    case Shape::kTable:
      return {rectangle(kTableLength, kTableWidth)};
  }
  throw InvalidArgument("unknown shape");
}

// Largest-remainder apportionment of n points by area.
inline std::vector<std::size_t> apportion(const std::vector<Primitive>& prims, std::size_t n) {
  double total = 0.0;
  for (const auto& p : prims) total += p.area;
  std::vector<std::size_t> counts(prims.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const double exact = double(n) * prims[i].area / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - double(counts[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k].second];
  return counts;
}

}  // namespace detail

inline PointCloud generate_synthetic(const SyntheticSpec& spec) {
  if (spec.point_count < 100) throw InvalidArgument("synthetic point_count must be >= 100");
  if (!(spec.noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be >= 0");

  const auto prims = detail::primitives_for(spec.shape);
  const auto counts = detail::apportion(prims, spec.point_count);

  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  PointCloud cloud;
  cloud.name = std::string(shape_name(spec.shape));
  cloud.points.reserve(spec.point_count);
  for (std::size_t p = 0; p < prims.size(); ++p) {
    const std::size_t n = counts[p];
    std::vector<std::size_t> strata(n);
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    std::shuffle(strata.begin(), strata.end(), rng);
    for (std::size_t k = 0; k < n; ++k) {
      const double u = (double(k) + unit(rng)) / double(n);
      const double v = (double(strata[k]) + unit(rng)) / double(n);
      cloud.points.push_back(prims[p].map(u, v));
    }
  }
  if (spec.noise_sigma > 0.0)
    for (auto& pt : cloud.points)
      for (int k = 0; k < 3; ++k) pt[k] += spec.noise_sigma * noise(rng);
  return cloud;
}

}  // namespace bayes_icp
