#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rigidflock {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

/// World pose of one agent: position in meters and heading about the
/// vertical axis, measured from the world x axis.
struct AgentPose {
  Vec3 p = Vec3::Zero();
  double psi = 0.0;
};

/// Pose of a neighbor expressed in the body frame of the observer.
struct RelativePose {
  Vec3 p_rel = Vec3::Zero();
  double psi_rel = 0.0;
};

/// Maps an angle onto (-pi, pi]. wrap_angle(-pi) == pi.
inline double wrap_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::domain_error("wrap_angle: non-finite angle");
  }
  if (theta > -kPi && theta <= kPi) {
    return theta;
  }
  double r = std::remainder(theta, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) {
    r += 2.0 * kPi;
  }
  return r;
}

/// sign with sign(0) == 0.
inline double sign0(double v) {
  return static_cast<double>((v > 0.0) - (v < 0.0));
}

/// Rotation about the world z axis.
inline Mat3 rotz(double psi) {
  if (!std::isfinite(psi)) {
    throw std::domain_error("rotz: non-finite angle");
  }
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  Mat3 r;
  r << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;
  return r;
}

/// Derivative of rotz with respect to its angle.
inline Mat3 rotz_derivative(double psi) {
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  Mat3 r;
  r << -s, -c, 0.0,
       c, -s, 0.0,
       0.0, 0.0, 0.0;
  return r;
}

/// Planar cross-product generator; S * R(psi) = dR/dpsi.
inline Mat3 skew_z() {
  Mat3 s;
  s << 0.0, -1.0, 0.0,
       1.0, 0.0, 0.0,
       0.0, 0.0, 0.0;
  return s;
}

/// Horizontal bearing of a vector, atan2(y, x).
inline double horizontal_bearing(const Vec3& v) {
  return std::atan2(v.y(), v.x());
}

inline double horizontal_norm(const Vec3& v) {
  return std::hypot(v.x(), v.y());
}

/// Pose of agent j seen from agent i: R(psi_i)^T (p_j - p_i), wrap(psi_j - psi_i).
inline RelativePose relative_pose(const AgentPose& from, const AgentPose& to) {
  RelativePose r;
  r.p_rel = rotz(from.psi).transpose() * (to.p - from.p);
  r.psi_rel = wrap_angle(to.psi - from.psi);
  return r;
}

}  // namespace rigidflock
