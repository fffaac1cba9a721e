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

#include <optional>
#include <stdexcept>

#include "infocalib/geometry.hpp"

namespace infocalib {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat25 = Eigen::Matrix<double, 2, 5>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

/// Pinhole intrinsics with the single-parameter FOV distortion.
struct CameraIntrinsics {
  Vec2 focal{1.0, 1.0};            // px
  Vec2 principal_point{0.0, 0.0};  // px
  double distortion = 0.5;         // w, in (0, pi)

  bool valid() const;
  void validate() const;  // throws std::invalid_argument

  Eigen::Matrix<double, 5, 1> as_vector() const;  // fx fy cx cy w
  static CameraIntrinsics from_vector(const Eigen::Matrix<double, 5, 1>& v);
};

struct CameraExtrinsics {
  Transform T_CI;  // camera frame w.r.t. IMU frame
};

struct FeatureObservation {
  int keyframe_id = 0;
  int landmark_id = 0;
  Vec2 uv = Vec2::Zero();  // px
  double sigma = 1.0;      // px
};

class BehindCameraError : public std::runtime_error {
 public:
  BehindCameraError() : std::runtime_error("point is behind the camera") {}
};

// Radius below which the distortion factor uses its even Taylor series.
inline constexpr double kDistortionSeriesThreshold = 1e-4;

/// beta_r(r) = atan(2 tan(w/2) r) / (w r), continuous at r = 0.
double distortion_factor(double r, double w);

struct ProjectionDerivatives {
  Mat23 d_point;       // d uv / d l_C
  Mat25 d_intrinsics;  // d uv / d (fx, fy, cx, cy, w)
};

/// Projects a point given in camera coordinates. Throws BehindCameraError if
/// l_C.z() <= 0.
Vec2 project(const Vec3& l_C, const CameraIntrinsics& intr,
             ProjectionDerivatives* derivatives = nullptr);

/// Maps a pixel back to normalized image coordinates (x/z, y/z). Returns
/// nullopt outside the invertible domain of the distortion.
std::optional<Vec2> unproject(const Vec2& uv, const CameraIntrinsics& intr);

bool inside_image(const Vec2& uv, int width, int height, double margin = 0.0);

/// Noise-free landmark measurement: project(T_CI(T_IG(l_G))).
Vec2 predict_observation(const Transform& T_IG, const Transform& T_CI, const Vec3& l_G,
                         const CameraIntrinsics& intr);

/// Analytic derivatives of predict_observation.
///
/// The pose block is w.r.t. the keyframe parameterization (T_GI = T_IG^-1):
/// columns 0..2 perturb q_GI on the right, columns 3..5 add to p_GI. The
/// extrinsics block perturbs q_CI on the right (0..2) and adds to p_CI (3..5).
struct ObservationJacobians {
  Mat26 d_pose;
  Mat23 d_landmark;
  Mat26 d_extrinsics;
  Mat25 d_intrinsics;
};

ObservationJacobians projection_jacobians(const Transform& T_IG, const Transform& T_CI,
                                          const Vec3& l_G, const CameraIntrinsics& intr);

/// Prediction and Jacobians in one pass, with the pose given as T_GI.
Vec2 predict_with_jacobians(const Transform& T_GI, const Transform& T_CI, const Vec3& l_G,
                            const CameraIntrinsics& intr, ObservationJacobians* jac);

}  // namespace infocalib
