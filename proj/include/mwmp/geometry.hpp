#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace mwmp {

using Vector6d = Eigen::Matrix<double, 6, 1>;

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

// Wrapped difference a - b in (-pi, pi].
inline double angle_difference(double a, double b) {
  return wrap_angle(a - b);
}

// Shortest-arc interpolation between angles a (t=0) and b (t=1).
inline double interpolate_angle(double a, double b, double t) {
  return wrap_angle(a + t * angle_difference(b, a));
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Eigen::Matrix3d rotation_zyx(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// Inverse of rotation_zyx: returns (roll, pitch, yaw).
inline Eigen::Vector3d euler_zyx(const Eigen::Matrix3d& R) {
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  double roll, yaw;
  if (std::abs(std::abs(R(2, 0)) - 1.0) < 1e-12) {
    // Gimbal lock: fold everything into roll.
    yaw = 0.0;
    roll = std::atan2(-R(0, 1), R(1, 1));
  } else {
    roll = std::atan2(R(2, 1), R(2, 2));
    yaw = std::atan2(R(1, 0), R(0, 0));
  }
  return {roll, pitch, yaw};
}

// Maps ZYX Euler-angle rates to the spatial angular velocity,
// omega = E * (droll, dpitch, dyaw), for R = Rz(yaw) Ry(pitch) Rx(roll):
//   omega = dyaw * z + dpitch * Rz(yaw) y + droll * Rz(yaw) Ry(pitch) x.
inline Eigen::Matrix3d euler_rate_to_omega(double roll, double pitch,
                                           double yaw) {
  (void)roll;
  const Eigen::Matrix3d Rz =
      Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Matrix3d Ry =
      Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()).toRotationMatrix();
  Eigen::Matrix3d E;
  E.col(0) = Rz * Ry * Eigen::Vector3d::UnitX();
  E.col(1) = Rz * Eigen::Vector3d::UnitY();
  E.col(2) = Eigen::Vector3d::UnitZ();
  return E;
}

// Pose stored as [x y z roll pitch yaw].
inline Eigen::Matrix3d pose_rotation(const Vector6d& pose) {
  return rotation_zyx(pose(3), pose(4), pose(5));
}

// Composes a relative pose into the world frame assuming the parent pose is
// planar (roll = pitch = 0, yaw free). Under that assumption the ZYX yaw of
// the child simply adds the parent yaw, and roll/pitch carry over.
inline Vector6d compose_planar(const Vector6d& parent, const Vector6d& child) {
  Vector6d out;
  const double psi = parent(5);
  const Eigen::Matrix3d Rz =
      Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  out.head<3>() = parent.head<3>() + Rz * child.head<3>();
  out(3) = child(3);
  out(4) = child(4);
  out(5) = wrap_angle(psi + child(5));
  return out;
}

}  // namespace mwmp
