/*
 * Copyright 2026 The Offnav Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace offnav {

/// SE(3) pose plus world-frame twist. The quaternion rotates vehicle-frame
/// vectors into the world frame and is kept unit-norm by every update.
struct RigidState {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();        // translation, m
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();        // linear velocity, m/s
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();    // angular rate, rad/s
};

/// Unit quaternion from a rotation vector.
inline Eigen::Quaterniond quat_exp(const Eigen::Vector3d& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(),
                         0.5 * rotvec.z());
    q.normalize();
    return q;
  }
  const Eigen::Vector3d axis = rotvec / angle;
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));
}

/// Rotation vector of a (possibly scaled) quaternion. A nonzero scalar
/// multiple of a unit quaternion encodes the same rotation, so the input
/// is normalized first; the sign is fixed to the w >= 0 hemisphere.
inline Eigen::Vector3d quat_log(const Eigen::Quaterniond& q_in) {
  const double n = q_in.norm();
  if (n < 1e-300) return Eigen::Vector3d::Zero();
  Eigen::Quaterniond q = q_in;
  q.coeffs() /= n;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double vec_norm = q.vec().norm();
  if (vec_norm < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(vec_norm, q.w());
  return (angle / vec_norm) * q.vec();
}

/// One orientation update of the semi-implicit integrator:
/// Normalize(q + 0.5 * ([omega, 0] * q) * dt) with omega in world frame.
inline Eigen::Quaterniond integrate_orientation(const Eigen::Quaterniond& q,
                                                const Eigen::Vector3d& omega,
                                                double dt) {
  const Eigen::Quaterniond omega_q(0.0, omega.x(), omega.y(), omega.z());
  Eigen::Quaterniond qdot = omega_q * q;
  Eigen::Quaterniond out;
  out.coeffs() = q.coeffs() + 0.5 * qdot.coeffs() * dt;
  out.normalize();
  return out;
}

/// Angle between two unit quaternions, degrees in [0, 180].
inline double quat_angle_deg(const Eigen::Quaterniond& a,
                             const Eigen::Quaterniond& b) {
  const Eigen::Vector3d r = quat_log(a.conjugate() * b);
  return r.norm() * 180.0 / std::numbers::pi;
}

}  // namespace offnav
