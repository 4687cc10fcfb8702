#pragma once

// Rigid-transform algebra for the six-parameter pose used by every solver:
// translation (x, y, z) followed by Euler angles (roll, pitch, yaw), composed
// as R = Rz(yaw) * Ry(pitch) * Rx(roll).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string_view>

#include "bayes_icp/point_cloud.hpp"

namespace bayes_icp {

using Vector6d = Eigen::Matrix<double, 6, 1>;

enum Param : int { kX = 0, kY, kZ, kRoll, kPitch, kYaw };

inline constexpr std::array<std::string_view, 6> kParamNames = {
    "x", "y", "z", "roll", "pitch", "yaw"};

inline constexpr bool is_angle(int param) { return param >= kRoll; }

/// Pose parameters (x, y, z, roll, pitch, yaw). Angles are stored unwrapped.
struct Pose6 {
  Vector6d values = Vector6d::Zero();

  Pose6() = default;
  explicit Pose6(const Vector6d& v) : values(v) {}
  Pose6(double x, double y, double z, double roll, double pitch, double yaw) {
    values << x, y, z, roll, pitch, yaw;
  }

  static Pose6 identity() { return Pose6{}; }

  double& operator[](int i) { return values[i]; }
  double operator[](int i) const { return values[i]; }

  double x() const { return values[kX]; }
  double y() const { return values[kY]; }
  double z() const { return values[kZ]; }
  double roll() const { return values[kRoll]; }
  double pitch() const { return values[kPitch]; }
  double yaw() const { return values[kYaw]; }

  Eigen::Vector3d translation() const { return values.head<3>(); }
  Eigen::Vector3d angles() const { return values.tail<3>(); }

  bool is_finite() const { return values.allFinite(); }

  friend bool operator==(const Pose6& a, const Pose6& b) {
    return a.values == b.values;
  }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (this * other)(p) == this(other(p))
  RigidTransform compose(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }
};

/// Partial derivatives of the rotation matrix w.r.t. roll, pitch and yaw.
struct RotationJacobian {
  std::array<Eigen::Matrix3d, 3> d_angle;

  const Eigen::Matrix3d& d_roll() const { return d_angle[0]; }
  const Eigen::Matrix3d& d_pitch() const { return d_angle[1]; }
  const Eigen::Matrix3d& d_yaw() const { return d_angle[2]; }
};

namespace detail {

inline Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

inline Eigen::Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

inline Eigen::Matrix3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

inline Eigen::Matrix3d d_rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return m;
}

inline Eigen::Matrix3d d_rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}

inline Eigen::Matrix3d d_rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

}  // namespace detail

inline Eigen::Matrix3d euler_to_rotation(double roll, double pitch, double yaw) {
  return detail::rot_z(yaw) * detail::rot_y(pitch) * detail::rot_x(roll);
}

inline RigidTransform pose_to_transform(const Pose6& p) {
  RigidTransform t;
  t.rotation = euler_to_rotation(p.roll(), p.pitch(), p.yaw());
  t.translation = p.translation();
  return t;
}

/// Inverse of pose_to_transform. Returns pitch in [-pi/2, pi/2] and roll, yaw
/// in (-pi, pi]; at gimbal lock the whole rotation is folded into yaw.
inline Pose6 transform_to_pose(const RigidTransform& t) {
  const Eigen::Matrix3d& r = t.rotation;
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  const double pitch = std::atan2(-r(2, 0), cos_pitch);
  double roll = 0.0;
  double yaw = 0.0;
  if (cos_pitch > 1e-12) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    yaw = std::atan2(-r(0, 1), r(1, 1));
  }
  return Pose6(t.translation.x(), t.translation.y(), t.translation.z(), roll,
               pitch, yaw);
}

inline RotationJacobian rotation_jacobian(const Pose6& p) {
  using namespace detail;
  const Eigen::Matrix3d rx = rot_x(p.roll());
  const Eigen::Matrix3d ry = rot_y(p.pitch());
  const Eigen::Matrix3d rz = rot_z(p.yaw());
  RotationJacobian j;
  j.d_angle[0] = rz * ry * d_rot_x(p.roll());
  j.d_angle[1] = rz * d_rot_y(p.pitch()) * rx;
  j.d_angle[2] = d_rot_z(p.yaw()) * ry * rx;
  return j;
}

/// Maps a single angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, kTwoPi);
  if (w <= -std::numbers::pi) w += kTwoPi;
  return w;
}

inline Pose6 normalize_angles(const Pose6& p) {
  Pose6 out = p;
  for (int k = kRoll; k <= kYaw; ++k) out[k] = wrap_angle(p[k]);
  return out;
}

inline PointCloud apply_transform(const RigidTransform& t, const PointCloud& pts) {
  PointCloud out;
  out.name = pts.name;
  out.points.reserve(pts.size());
  for (const auto& p : pts.points) out.points.push_back(t * p);
  return out;
}

inline PointCloud apply_transform(const Pose6& p, const PointCloud& pts) {
  return apply_transform(pose_to_transform(p), pts);
}

}  // namespace bayes_icp
