#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>

#include "cm/events.hpp"

namespace cm {

using AngularVelocity = Eigen::Vector3d;
using Rotation = Eigen::Matrix3d;

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Rodrigues rotation of an axis-angle vector. exp_map(0) = I exactly; below
/// ~1e-9 radians the second-order Taylor form avoids the 0/0.
inline Rotation exp_map(const Eigen::Vector3d& axis_angle) {
  const double theta2 = axis_angle.squaredNorm();
  const Eigen::Matrix3d k = skew(axis_angle);
  if (theta2 < 1e-18) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * (k * k);
  }
  const double theta = std::sqrt(theta2);
  return Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / theta2) * (k * k);
}

/// Unit bearing of pixel u: normalized K^-1 [u; 1].
inline Eigen::Vector3d bearing(const Eigen::Vector2d& u, const CameraIntrinsics& k) {
  const Eigen::Vector3d ray((u.x() - k.cx) / k.fx, (u.y() - k.cy) / k.fy, 1.0);
  return ray.normalized();
}

namespace detail {
// A ray this close to the principal plane has no finite pinhole projection.
inline constexpr double kProjectionEps = 1e-12;
}  // namespace detail

/// Pinhole projection of a camera-frame ray; empty when the ray is on or
/// behind the principal plane.
inline std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& ray,
                                              const CameraIntrinsics& k) {
  if (ray.z() <= detail::kProjectionEps) return std::nullopt;
  return Eigen::Vector2d(k.fx * ray.x() / ray.z() + k.cx,
                         k.fy * ray.y() / ray.z() + k.cy);
}

/// Rotated unit bearing R(t; omega) * bearing(u); the cone axis of the
/// bound construction.
inline Eigen::Vector3d warp_ray(const Eigen::Vector2d& u, double t,
                                const AngularVelocity& omega,
                                const CameraIntrinsics& k) {
  const Eigen::Vector3d r = exp_map(omega * t) * bearing(u, k);
  return r.normalized();
}

/// Warp of an event position into the t = 0 image plane. Empty result means
/// the ray rotated to/behind the principal plane; callers treat the event as
/// off-image.
inline std::optional<Eigen::Vector2d> warp_event(const Eigen::Vector2d& u, double t,
                                                 const AngularVelocity& omega,
                                                 const CameraIntrinsics& k) {
  return project(exp_map(omega * t) * bearing(u, k), k);
}

}  // namespace cm
