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
#include <vector>

#include "infocalib/geometry.hpp"
#include "infocalib/state.hpp"

namespace infocalib {

/// Scale/misalignment of gyroscope and accelerometer plus the rotation of the
/// accelerometer frame w.r.t. the IMU (gyro) frame.
struct ImuIntrinsics {
  Vec3 s_g = Vec3::Ones();
  Vec3 m_g = Vec3::Zero();
  Vec3 s_a = Vec3::Ones();
  Vec3 m_a = Vec3::Zero();
  Quat q_AI = Quat::Identity();

  Mat3 T_g() const;
  Mat3 T_a() const;
  void validate() const;  // throws std::invalid_argument on non-positive scales
};

struct ImuSample {
  double t = 0.0;                   // s
  Vec3 omega_meas = Vec3::Zero();   // rad/s
  Vec3 accel_meas = Vec3::Zero();   // m/s^2
};

struct NoiseModel {
  double sigma_g = 1.7e-4;   // rad/s/sqrt(Hz)
  double sigma_a = 2.0e-3;   // m/s^2/sqrt(Hz)
  double sigma_bg = 2.0e-5;  // rad/s^2/sqrt(Hz)
  double sigma_ba = 3.0e-4;  // m/s^3/sqrt(Hz)
  double sigma_c = 0.5;      // px
  double gravity_magnitude = 9.80665;  // m/s^2

  Vec3 gravity() const { return Vec3(0.0, 0.0, -gravity_magnitude); }
  void validate() const;
};

struct ImuBiases {
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
};

/// Upper-triangular correction matrix [[s0, m0, m1], [0, s1, m2], [0, 0, s2]].
Mat3 correction_matrix(const Vec3& s, const Vec3& m);

Vec3 simulate_gyro(const Vec3& omega_true_I, const ImuIntrinsics& intr, const Vec3& b_g,
                   const Vec3& noise = Vec3::Zero());

Vec3 simulate_accel(const Vec3& a_true_G, const Mat3& R_IG, const ImuIntrinsics& intr,
                    const Vec3& b_a, const Vec3& noise = Vec3::Zero(),
                    const Vec3& g_G = Vec3(0.0, 0.0, -9.80665));

struct CorrectedImu {
  Vec3 omega;           // rad/s, IMU frame
  Vec3 specific_force;  // m/s^2, IMU frame
};

CorrectedImu correct_measurements(const ImuSample& sample, const ImuIntrinsics& intr,
                                  const ImuBiases& biases);

// Parameters the preintegrated deltas depend on, in this column order:
// b_g, b_a, s_g, m_g, s_a, m_a, q_AI (right perturbation).
inline constexpr int kImuParamDim = 21;
inline constexpr int kImuIntrinsicsDim = 15;
using Mat9x21 = Eigen::Matrix<double, 9, kImuParamDim>;
using Vec21 = Eigen::Matrix<double, kImuParamDim, 1>;

/// Relative motion between two keyframes integrated from corrected IMU samples.
/// Rows of the covariance and the Jacobian are ordered rotation, velocity,
/// position.
struct PreintegratedImu {
  Quat delta_rotation = Quat::Identity();
  Vec3 delta_velocity = Vec3::Zero();
  Vec3 delta_position = Vec3::Zero();
  double duration = 0.0;
  Mat9 covariance = Mat9::Zero();
  ImuBiases bias_linearization;
  Mat9x21 jacobian = Mat9x21::Zero();
  double sigma_bg = 0.0;
  double sigma_ba = 0.0;

  Eigen::Matrix<double, 9, 6> bias_jacobians() const { return jacobian.leftCols<6>(); }

  /// First-order prediction of the deltas after a change of the parameters.
  PreintegratedImu corrected(const Vec21& delta_params) const;
  PreintegratedImu corrected_for_biases(const ImuBiases& biases) const;
};

/// Midpoint-rule preintegration over samples[0].t .. samples.back().t.
/// Throws std::invalid_argument on fewer than two samples or non-increasing
/// timestamps.
PreintegratedImu preintegrate(std::span<const ImuSample> samples, const ImuIntrinsics& intr,
                              const ImuBiases& bias_lin, const NoiseModel& noise);

/// Samples covering [t0, t1], with linearly interpolated endpoints when the
/// stream has no sample at exactly t0 or t1. `stream` must be sorted.
std::vector<ImuSample> samples_between(std::span<const ImuSample> stream, double t0, double t1);

struct InertialError {
  Vec15 residual;  // rot, vel, pos, b_g walk, b_a walk
  Mat15 weight;
};

struct InertialJacobians {
  Mat15 d_xk;                                            // keyframe tangent order
  Mat15 d_xk1;
  Eigen::Matrix<double, 15, kImuIntrinsicsDim> d_intrinsics;  // s_g m_g s_a m_a q_AI
};

Mat15 inertial_weight(const PreintegratedImu& pre);

/// Residual of x_k1 against x_k propagated by pre. Jacobians assume pre was
/// integrated at x_k's biases and at the intrinsics being differentiated.
InertialError inertial_error(const KeyframeState& x_k, const KeyframeState& x_k1,
                             const PreintegratedImu& pre, const Vec3& gravity,
                             InertialJacobians* jac = nullptr);

/// Bias random-walk factor across a gap of length dt (no motion constraint).
struct BiasBridgeError {
  Vec6 residual;
  Vec6 weight_diagonal;
};

BiasBridgeError bias_bridge_error(const KeyframeState& x_k, const KeyframeState& x_k1,
                                  double dt, const NoiseModel& noise);

}  // namespace infocalib
