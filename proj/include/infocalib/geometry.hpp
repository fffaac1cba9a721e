// Copyright 2025 Anonymous Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace infocalib {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Vec15 = Eigen::Matrix<double, 15, 1>;

// Hamilton quaternion. q_AB maps coordinates expressed in frame B into frame A,
// so that p_A = q_AB * p_B (the same mapping as the rotation matrix R_AB).
using Quat = Eigen::Quaterniond;

/// Tangent-space rotation increment in radians, applied on the right:
/// q' = q * Exp(delta).
using RotationDelta = Vec3;

Quat make_unit_quaternion(double w, double x, double y, double z);

/// True when q1 and q2 represent the same rotation (q and -q are equal).
bool same_rotation(const Quat& q1, const Quat& q2, double tol = 1e-9);

/// Rotation angle in radians, in [0, pi].
double rotation_angle(const Quat& q);

/// Angle between two rotations in radians.
double angle_between(const Quat& q1, const Quat& q2);

namespace so3 {

Mat3 hat(const Vec3& v);
Quat exp(const Vec3& phi);
Vec3 log(const Quat& q);
Mat3 right_jacobian(const Vec3& phi);
Mat3 right_jacobian_inverse(const Vec3& phi);

}  // namespace so3

inline Quat retract(const Quat& q, const RotationDelta& delta) {
  return (q * so3::exp(delta)).normalized();
}

/// Inverse of retract: retract(q0, local_difference(q0, q1)) == q1.
inline RotationDelta local_difference(const Quat& q0, const Quat& q1) {
  return so3::log(q0.conjugate() * q1);
}

/// Rigid transform T_AB: p_A = R_AB * p_B + p_AB.
struct Transform {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Transform() = default;
  Transform(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

  static Transform identity() { return {}; }

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Transform inverse() const;
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Transform operator*(const Transform& other) const;
};

Vec3 transform_point(const Transform& T, const Vec3& p);
Transform compose(const Transform& T_AB, const Transform& T_BC);
Transform invert(const Transform& T);

/// Rotation about the z axis by `angle` radians.
Quat yaw_rotation(double angle);

/// Yaw angle of the rotation, i.e. heading of the rotated x axis in the xy plane.
double yaw_of(const Quat& q);

/// Quaternion maximizing sum_i (q^T q_i)^2 (dominant eigenvector of
/// sum_i q_i q_i^T), returned with w >= 0. Throws std::invalid_argument on an
/// empty input.
Quat average_quaternions(std::span<const Quat> qs);

}  // namespace infocalib
