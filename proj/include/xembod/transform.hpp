#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace xembod {

using Eigen::Matrix3d;
using Eigen::Quaterniond;
using Eigen::Vector3d;

// Rigid transform: position + unit quaternion. The quaternion is renormalized
// on every construction and composition so its norm stays within 1e-9 of 1.
struct Transform {
  Vector3d position{Vector3d::Zero()};
  Quaterniond orientation{Quaterniond::Identity()};

  Transform() = default;
  Transform(const Vector3d& p, const Quaterniond& q)
      : position(p), orientation(q.normalized()) {}

  static Transform identity() { return {}; }

  static Transform translation(const Vector3d& p) {
    return {p, Quaterniond::Identity()};
  }

  static Transform rotation(const Quaterniond& q) {
    return {Vector3d::Zero(), q};
  }

  // this ∘ other: apply `other` in this frame.
  Transform operator*(const Transform& other) const {
    return {position + orientation * other.position,
            (orientation * other.orientation).normalized()};
  }

  Transform inverse() const {
    Quaterniond qi = orientation.conjugate();
    return {qi * (-position), qi};
  }

  Vector3d apply(const Vector3d& p) const { return position + orientation * p; }
};

// Axis-angle vector of q (rotation vector, |v| = angle in [0, pi]).
inline Vector3d quat_log(const Quaterniond& q_in) {
  Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vector3d v(q.x(), q.y(), q.z());
  const double sin_half = v.norm();
  const double cos_half = q.w();
  if (sin_half < 1e-12) return 2.0 * v;  // small angle: sin(a/2) ~ a/2
  const double angle = 2.0 * std::atan2(sin_half, cos_half);
  return (angle / sin_half) * v;
}

inline Quaterniond quat_exp(const Vector3d& v) {
  const double angle = v.norm();
  if (angle < 1e-12) {
    Quaterniond q(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
    return q.normalized();
  }
  const Vector3d axis = v / angle;
  return Quaterniond(Eigen::AngleAxisd(angle, axis));
}

// Rotation carrying `from` to `to`: to = delta * from.
inline Quaterniond quat_delta(const Quaterniond& to, const Quaterniond& from) {
  return (to * from.conjugate()).normalized();
}

inline double quat_angle(const Quaterniond& a, const Quaterniond& b) {
  return quat_log(quat_delta(a, b)).norm();
}

inline Quaterniond slerp(const Quaterniond& a, const Quaterniond& b, double t) {
  return a.slerp(t, b).normalized();
}

// Canonical sign (w >= 0); quaternion features must not flip sign mid-clip.
inline Quaterniond quat_canonical(const Quaterniond& q) {
  Quaterniond out = q.normalized();
  if (out.w() < 0.0) out.coeffs() = -out.coeffs();
  return out;
}

}  // namespace xembod
