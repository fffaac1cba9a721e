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

#include <array>
#include <string_view>

#include "infocalib/camera.hpp"
#include "infocalib/imu.hpp"

namespace infocalib {

// Minimal calibration coordinates, in this order:
// f(2) c(2) w(1) | q_CI(3, right) p_CI(3) | s_g(3) m_g(3) s_a(3) m_a(3) q_AI(3, right)
inline constexpr int kCalibDim = 26;
inline constexpr int kCalFocal = 0;
inline constexpr int kCalPrincipal = 2;
inline constexpr int kCalDistortion = 4;
inline constexpr int kCalExtRot = 5;
inline constexpr int kCalExtPos = 8;
inline constexpr int kCalImu = 11;  // start of the 15 IMU intrinsics
inline constexpr int kCalSg = 11;
inline constexpr int kCalMg = 14;
inline constexpr int kCalSa = 17;
inline constexpr int kCalMa = 20;
inline constexpr int kCalQai = 23;

using Vec26 = Eigen::Matrix<double, kCalibDim, 1>;
using Mat26x26 = Eigen::Matrix<double, kCalibDim, kCalibDim>;

struct CalibrationState {
  CameraIntrinsics camera;
  CameraExtrinsics extrinsics;
  ImuIntrinsics imu;

  void validate() const;
  CalibrationState retract(const Vec26& delta) const;
  /// Inverse of retract: this->retract(local_difference(other)) == other.
  Vec26 local_difference(const CalibrationState& other) const;
};

/// Short names of the 26 minimal coordinates, e.g. "fx", "q_CI_x", "s_a_z".
const std::array<std::string_view, kCalibDim>& calibration_parameter_names();

}  // namespace infocalib
