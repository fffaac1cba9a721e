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

#include "infocalib/camera.hpp"

#include <cmath>
#include <numbers>

namespace infocalib {

namespace {

struct DistortionEval {
  double beta;
  double dbeta_dr_over_r;  // (d beta / d r) / r, finite at r = 0
  double dbeta_dw;
};

DistortionEval evaluate_distortion(double r, double w) {
  const double t = std::tan(0.5 * w);
  const double a = 2.0 * t;
  const double da_dw = 1.0 + t * t;
  const double x = a * r;
  DistortionEval out;
  if (r < kDistortionSeriesThreshold) {
    const double x2 = x * x;
    const double poly = 1.0 - x2 / 3.0 + x2 * x2 / 5.0 - x2 * x2 * x2 / 7.0;
    // d poly / dx divided by x.
    const double dpoly_over_x = -2.0 / 3.0 + 4.0 * x2 / 5.0 - 6.0 * x2 * x2 / 7.0;
    out.beta = a / w * poly;
    out.dbeta_dr_over_r = a * a * a / w * dpoly_over_x;
    out.dbeta_dw = (da_dw / w - a / (w * w)) * poly + a / w * dpoly_over_x * x * r * da_dw;
  } else {
    const double denom = 1.0 + x * x;
    out.beta = std::atan(x) / (w * r);
    out.dbeta_dr_over_r = (a / (denom * w * r) - out.beta / r) / r;
    out.dbeta_dw = da_dw / (w * denom) - out.beta / w;
  }
  return out;
}

}  // namespace

bool CameraIntrinsics::valid() const {
  return focal.x() > 0.0 && focal.y() > 0.0 && distortion > 0.0 &&
         distortion < std::numbers::pi && principal_point.allFinite();
}

void CameraIntrinsics::validate() const {
  if (!(focal.x() > 0.0 && focal.y() > 0.0)) {
    throw std::invalid_argument("camera focal lengths must be positive");
  }
  if (!(distortion > 0.0 && distortion < std::numbers::pi)) {
    throw std::invalid_argument("FOV distortion w must lie in (0, pi)");
  }
  if (!principal_point.allFinite()) {
    throw std::invalid_argument("principal point must be finite");
  }
}

Eigen::Matrix<double, 5, 1> CameraIntrinsics::as_vector() const {
  Eigen::Matrix<double, 5, 1> v;
  v << focal, principal_point, distortion;
  return v;
}

CameraIntrinsics CameraIntrinsics::from_vector(const Eigen::Matrix<double, 5, 1>& v) {
  CameraIntrinsics c;
  c.focal = v.head<2>();
  c.principal_point = v.segment<2>(2);
  c.distortion = v(4);
  return c;
}

double distortion_factor(double r, double w) { return evaluate_distortion(r, w).beta; }

Vec2 project(const Vec3& l_C, const CameraIntrinsics& intr, ProjectionDerivatives* derivatives) {
  if (!(l_C.z() > 0.0)) throw BehindCameraError();
  const double inv_z = 1.0 / l_C.z();
  const Vec2 p(l_C.x() * inv_z, l_C.y() * inv_z);
  const double r = p.norm();
  const DistortionEval d = evaluate_distortion(r, intr.distortion);
  const Vec2 uv(d.beta * intr.focal.x() * p.x() + intr.principal_point.x(),
                d.beta * intr.focal.y() * p.y() + intr.principal_point.y());
  if (derivatives != nullptr) {
    Eigen::Matrix<double, 2, 3> dp_dl;
    dp_dl << inv_z, 0.0, -p.x() * inv_z,
             0.0, inv_z, -p.y() * inv_z;
    const Eigen::Matrix2d ddist = d.beta * Eigen::Matrix2d::Identity() +
                                  d.dbeta_dr_over_r * p * p.transpose();
    derivatives->d_point = intr.focal.asDiagonal() * ddist * dp_dl;
    derivatives->d_intrinsics << d.beta * p.x(), 0.0, 1.0, 0.0, intr.focal.x() * p.x() * d.dbeta_dw,
                                 0.0, d.beta * p.y(), 0.0, 1.0, intr.focal.y() * p.y() * d.dbeta_dw;
  }
  return uv;
}

std::optional<Vec2> unproject(const Vec2& uv, const CameraIntrinsics& intr) {
  const Vec2 pd((uv.x() - intr.principal_point.x()) / intr.focal.x(),
                (uv.y() - intr.principal_point.y()) / intr.focal.y());
  const double rd = pd.norm();
  const double w = intr.distortion;
  const double a = 2.0 * std::tan(0.5 * w);
  if (w * rd >= 0.5 * std::numbers::pi) return std::nullopt;
  if (rd < 1e-12) return Vec2(pd * (w / a));
  const double r = std::tan(w * rd) / a;
  return Vec2(pd * (r / rd));
}

bool inside_image(const Vec2& uv, int width, int height, double margin) {
  return uv.x() >= margin && uv.y() >= margin && uv.x() < width - margin &&
         uv.y() < height - margin;
}

Vec2 predict_observation(const Transform& T_IG, const Transform& T_CI, const Vec3& l_G,
                         const CameraIntrinsics& intr) {
  return project(T_CI * (T_IG * l_G), intr);
}

Vec2 predict_with_jacobians(const Transform& T_GI, const Transform& T_CI, const Vec3& l_G,
                            const CameraIntrinsics& intr, ObservationJacobians* jac) {
  const Mat3 R_GI = T_GI.rotation_matrix();
  const Mat3 R_CI = T_CI.rotation_matrix();
  const Vec3 l_I = R_GI.transpose() * (l_G - T_GI.translation);
  const Vec3 l_C = R_CI * l_I + T_CI.translation;
  if (jac == nullptr) return project(l_C, intr);
  ProjectionDerivatives pd;
  const Vec2 uv = project(l_C, intr, &pd);
  const Mat3 dlC_dlI = R_CI;
  const Mat23 duv_dlI = pd.d_point * dlC_dlI;
  jac->d_pose.leftCols<3>() = duv_dlI * so3::hat(l_I);
  jac->d_pose.rightCols<3>() = -duv_dlI * R_GI.transpose();
  jac->d_landmark = duv_dlI * R_GI.transpose();
  jac->d_extrinsics.leftCols<3>() = -pd.d_point * R_CI * so3::hat(l_I);
  jac->d_extrinsics.rightCols<3>() = pd.d_point;
  jac->d_intrinsics = pd.d_intrinsics;
  return uv;
}

ObservationJacobians projection_jacobians(const Transform& T_IG, const Transform& T_CI,
                                          const Vec3& l_G, const CameraIntrinsics& intr) {
  ObservationJacobians jac;
  predict_with_jacobians(T_IG.inverse(), T_CI, l_G, intr, &jac);
  return jac;
}

}  // namespace infocalib
