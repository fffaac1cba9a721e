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

#include "infocalib/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace infocalib {

Quat make_unit_quaternion(double w, double x, double y, double z) {
  Quat q(w, x, y, z);
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("quaternion must have finite nonzero norm");
  }
  q.coeffs() /= n;
  return q;
}

bool same_rotation(const Quat& q1, const Quat& q2, double tol) {
  return std::abs(std::abs(q1.dot(q2)) - 1.0) <= tol ||
         (q1.coeffs() - q2.coeffs()).norm() <= tol ||
         (q1.coeffs() + q2.coeffs()).norm() <= tol;
}

double rotation_angle(const Quat& q) { return so3::log(q).norm(); }

double angle_between(const Quat& q1, const Quat& q2) {
  return rotation_angle(q1.conjugate() * q2);
}

namespace so3 {

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Quat exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-10) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return q.normalized();
  }
  const double half = 0.5 * theta;
  const Vec3 axis = phi / theta;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Vec3 log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-10) {
    // atan2(n, w) / n -> 1 / w for small n.
    return 2.0 * v / q.w();
  }
  return 2.0 * std::atan2(n, q.w()) / n * v;
}

Mat3 right_jacobian(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 K = hat(phi);
  double a, b;
  if (theta2 < 1e-8) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() - a * K + b * K * K;
}

Mat3 right_jacobian_inverse(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 K = hat(phi);
  double c;
  if (theta2 < 1e-8) {
    c = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    const double theta = std::sqrt(theta2);
    c = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() + 0.5 * K + c * K * K;
}

}  // namespace so3

Transform Transform::inverse() const {
  const Quat q_inv = rotation.conjugate();
  return Transform(q_inv, -(q_inv * translation));
}

Transform Transform::operator*(const Transform& other) const {
  return Transform(rotation * other.rotation, rotation * other.translation + translation);
}

Vec3 transform_point(const Transform& T, const Vec3& p) { return T * p; }

Transform compose(const Transform& T_AB, const Transform& T_BC) { return T_AB * T_BC; }

Transform invert(const Transform& T) { return T.inverse(); }

Quat yaw_rotation(double angle) { return Quat(Eigen::AngleAxisd(angle, Vec3::UnitZ())); }

double yaw_of(const Quat& q) {
  const Vec3 x = q * Vec3::UnitX();
  return std::atan2(x.y(), x.x());
}

Quat average_quaternions(std::span<const Quat> qs) {
  if (qs.empty()) throw std::invalid_argument("average_quaternions: empty list");
  Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
  for (const Quat& q : qs) {
    const Eigen::Vector4d v(q.w(), q.x(), q.y(), q.z());
    M += v * v.transpose() / v.squaredNorm();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(M);
  Eigen::Vector4d v = es.eigenvectors().col(3);
  if (v(0) < 0.0) v = -v;
  return make_unit_quaternion(v(0), v(1), v(2), v(3));
}

}  // namespace infocalib
