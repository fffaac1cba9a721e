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

#include "infocalib/imu.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

namespace infocalib {

namespace {

constexpr int kPhiBg = 0;
constexpr int kPhiBa = 3;
constexpr int kPhiSg = 6;
constexpr int kPhiMg = 9;
constexpr int kPhiSa = 12;
constexpr int kPhiMa = 15;
constexpr int kPhiQ = 18;

using Mat3x21 = Eigen::Matrix<double, 3, kImuParamDim>;

// Columns of (dT/ds) v and (dT/dm) v for the correction matrix layout.
Mat3 scale_columns(const Vec3& v) { return v.asDiagonal(); }

Mat3 misalignment_columns(const Vec3& v) {
  Mat3 m = Mat3::Zero();
  m(0, 0) = v.y();
  m(0, 1) = v.z();
  m(1, 2) = v.z();
  return m;
}

struct SampleTerms {
  Vec3 omega;
  Vec3 force;
  Mat3x21 d_omega;  // d omega / d params
  Mat3x21 d_force;  // d force / d params
};

struct IntrinsicsCache {
  Mat3 Tg_inv;
  Mat3 Ta_inv;
  Mat3 R_AI;
};

SampleTerms sample_terms(const ImuSample& s, const IntrinsicsCache& c, const ImuBiases& b) {
  SampleTerms out;
  out.omega = c.Tg_inv * (s.omega_meas - b.b_g);
  const Vec3 u = c.Ta_inv * (s.accel_meas - b.b_a);
  out.force = c.R_AI.transpose() * u;
  out.d_omega.setZero();
  out.d_force.setZero();
  out.d_omega.middleCols<3>(kPhiBg) = -c.Tg_inv;
  out.d_omega.middleCols<3>(kPhiSg) = -c.Tg_inv * scale_columns(out.omega);
  out.d_omega.middleCols<3>(kPhiMg) = -c.Tg_inv * misalignment_columns(out.omega);
  const Mat3 A = c.R_AI.transpose() * c.Ta_inv;
  out.d_force.middleCols<3>(kPhiBa) = -A;
  out.d_force.middleCols<3>(kPhiSa) = -A * scale_columns(u);
  out.d_force.middleCols<3>(kPhiMa) = -A * misalignment_columns(u);
  out.d_force.middleCols<3>(kPhiQ) = so3::hat(out.force);
  return out;
}

}  // namespace

Mat3 correction_matrix(const Vec3& s, const Vec3& m) {
  Mat3 T;
  T << s.x(), m.x(), m.y(),
       0.0, s.y(), m.z(),
       0.0, 0.0, s.z();
  return T;
}

Mat3 ImuIntrinsics::T_g() const { return correction_matrix(s_g, m_g); }
Mat3 ImuIntrinsics::T_a() const { return correction_matrix(s_a, m_a); }

void ImuIntrinsics::validate() const {
  if (!(s_g.minCoeff() > 0.0) || !(s_a.minCoeff() > 0.0)) {
    throw std::invalid_argument("IMU scale factors must be positive");
  }
  if (!m_g.allFinite() || !m_a.allFinite() || !q_AI.coeffs().allFinite()) {
    throw std::invalid_argument("IMU intrinsics must be finite");
  }
}

void NoiseModel::validate() const {
  const auto check = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("noise parameter ") + name + " must be positive");
    }
  };
  check(sigma_g, "sigma_g");
  check(sigma_a, "sigma_a");
  check(sigma_bg, "sigma_bg");
  check(sigma_ba, "sigma_ba");
  check(sigma_c, "sigma_c");
  check(gravity_magnitude, "gravity_magnitude");
}

Vec3 simulate_gyro(const Vec3& omega_true_I, const ImuIntrinsics& intr, const Vec3& b_g,
                   const Vec3& noise) {
  return intr.T_g() * omega_true_I + b_g + noise;
}

Vec3 simulate_accel(const Vec3& a_true_G, const Mat3& R_IG, const ImuIntrinsics& intr,
                    const Vec3& b_a, const Vec3& noise, const Vec3& g_G) {
  return intr.T_a() * (intr.q_AI.toRotationMatrix() * (R_IG * (a_true_G - g_G))) + b_a + noise;
}

CorrectedImu correct_measurements(const ImuSample& sample, const ImuIntrinsics& intr,
                                  const ImuBiases& biases) {
  CorrectedImu out;
  out.omega = intr.T_g().triangularView<Eigen::Upper>().solve(sample.omega_meas - biases.b_g);
  out.specific_force =
      intr.q_AI.toRotationMatrix().transpose() *
      intr.T_a().triangularView<Eigen::Upper>().solve(sample.accel_meas - biases.b_a);
  return out;
}

PreintegratedImu preintegrate(std::span<const ImuSample> samples, const ImuIntrinsics& intr,
                              const ImuBiases& bias_lin, const NoiseModel& noise) {
  if (samples.size() < 2) throw std::invalid_argument("preintegrate: need at least 2 samples");
  for (size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw std::invalid_argument("preintegrate: timestamps must be strictly increasing");
    }
  }
  IntrinsicsCache cache;
  cache.Tg_inv = intr.T_g().inverse();
  cache.Ta_inv = intr.T_a().inverse();
  cache.R_AI = intr.q_AI.toRotationMatrix();

  const Mat3 noise_map_g = cache.Tg_inv;
  const Mat3 noise_map_a = cache.R_AI.transpose() * cache.Ta_inv;

  Mat3 dR = Mat3::Identity();
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
  Mat3x21 J_R = Mat3x21::Zero();
  Mat3x21 J_v = Mat3x21::Zero();
  Mat3x21 J_p = Mat3x21::Zero();
  Mat9 cov = Mat9::Zero();

  SampleTerms cur = sample_terms(samples[0], cache, bias_lin);
  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const SampleTerms next = sample_terms(samples[i + 1], cache, bias_lin);
    const double dt = samples[i + 1].t - samples[i].t;
    const Vec3 omega_bar = 0.5 * (cur.omega + next.omega);
    const Vec3 phi = omega_bar * dt;
    const Mat3 step = so3::exp(phi).toRotationMatrix();
    const Mat3 Jr = so3::right_jacobian(phi);
    const Mat3 dR_next = dR * step;

    const Vec3 a_bar = 0.5 * (dR * cur.force + dR_next * next.force);
    const Mat3x21 d_a_bar =
        0.5 * (dR * (-so3::hat(cur.force) * J_R + cur.d_force));
    const Mat3x21 J_R_next =
        step.transpose() * J_R + Jr * dt * 0.5 * (cur.d_omega + next.d_omega);
    const Mat3x21 d_a_bar_full =
        d_a_bar + 0.5 * (dR_next * (-so3::hat(next.force) * J_R_next + next.d_force));

    // Covariance propagation, state order rot, vel, pos.
    const Mat3 da_dtheta =
        -0.5 * (dR * so3::hat(cur.force) + dR_next * so3::hat(next.force) * step.transpose());
    Mat9 A = Mat9::Identity();
    A.block<3, 3>(0, 0) = step.transpose();
    A.block<3, 3>(3, 0) = da_dtheta * dt;
    A.block<3, 3>(6, 0) = 0.5 * da_dtheta * dt * dt;
    A.block<3, 3>(6, 3) = Mat3::Identity() * dt;
    Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
    B.block<3, 3>(0, 0) = Jr * noise_map_g * dt;
    const Mat3 Ra = 0.5 * (dR + dR_next) * noise_map_a;
    B.block<3, 3>(3, 3) = Ra * dt;
    B.block<3, 3>(6, 3) = 0.5 * Ra * dt * dt;
    Eigen::Matrix<double, 6, 1> q;
    q.head<3>().setConstant(noise.sigma_g * noise.sigma_g / dt);
    q.tail<3>().setConstant(noise.sigma_a * noise.sigma_a / dt);
    cov = A * cov * A.transpose() + B * q.asDiagonal() * B.transpose();

    dp += dv * dt + 0.5 * a_bar * dt * dt;
    J_p += J_v * dt + 0.5 * d_a_bar_full * dt * dt;
    dv += a_bar * dt;
    J_v += d_a_bar_full * dt;
    dR = dR_next;
    J_R = J_R_next;
    cur = next;
  }

  PreintegratedImu out;
  out.delta_rotation = Quat(dR).normalized();
  out.delta_velocity = dv;
  out.delta_position = dp;
  out.duration = samples.back().t - samples.front().t;
  out.covariance = 0.5 * (cov + cov.transpose());
  out.bias_linearization = bias_lin;
  out.jacobian.topRows<3>() = J_R;
  out.jacobian.middleRows<3>(3) = J_v;
  out.jacobian.bottomRows<3>() = J_p;
  out.sigma_bg = noise.sigma_bg;
  out.sigma_ba = noise.sigma_ba;
  return out;
}

PreintegratedImu PreintegratedImu::corrected(const Vec21& delta_params) const {
  PreintegratedImu out = *this;
  const Eigen::Matrix<double, 9, 1> d = jacobian * delta_params;
  out.delta_rotation = retract(delta_rotation, d.head<3>());
  out.delta_velocity += d.segment<3>(3);
  out.delta_position += d.tail<3>();
  out.bias_linearization.b_g += delta_params.segment<3>(kPhiBg);
  out.bias_linearization.b_a += delta_params.segment<3>(kPhiBa);
  return out;
}

PreintegratedImu PreintegratedImu::corrected_for_biases(const ImuBiases& biases) const {
  Vec21 d = Vec21::Zero();
  d.segment<3>(kPhiBg) = biases.b_g - bias_linearization.b_g;
  d.segment<3>(kPhiBa) = biases.b_a - bias_linearization.b_a;
  return corrected(d);
}

std::vector<ImuSample> samples_between(std::span<const ImuSample> stream, double t0, double t1) {
  if (!(t1 > t0)) throw std::invalid_argument("samples_between: empty interval");
  if (stream.empty() || stream.front().t > t0 + 1e-9 || stream.back().t < t1 - 1e-9) {
    throw std::invalid_argument("samples_between: IMU stream does not cover the interval");
  }
  constexpr double kTimeTol = 1e-9;
  const auto interpolate = [&](double t) {
    auto it = std::lower_bound(stream.begin(), stream.end(), t,
                               [](const ImuSample& s, double v) { return s.t < v; });
    if (it == stream.end()) return stream.back();
    if (std::abs(it->t - t) <= kTimeTol) return *it;
    if (it == stream.begin()) return *it;
    const ImuSample& a = *(it - 1);
    const ImuSample& b = *it;
    if (std::abs(a.t - t) <= kTimeTol) return a;
    const double alpha = (t - a.t) / (b.t - a.t);
    ImuSample s;
    s.t = t;
    s.omega_meas = (1.0 - alpha) * a.omega_meas + alpha * b.omega_meas;
    s.accel_meas = (1.0 - alpha) * a.accel_meas + alpha * b.accel_meas;
    return s;
  };
  std::vector<ImuSample> out;
  out.push_back(interpolate(t0));
  out.back().t = t0;
  for (const ImuSample& s : stream) {
    if (s.t > t0 + kTimeTol && s.t < t1 - kTimeTol) out.push_back(s);
  }
  out.push_back(interpolate(t1));
  out.back().t = t1;
  return out;
}

Mat15 inertial_weight(const PreintegratedImu& pre) {
  Mat15 W = Mat15::Zero();
  const Mat9 cov = 0.5 * (pre.covariance + pre.covariance.transpose());
  Eigen::LDLT<Mat9> ldlt(cov);
  W.topLeftCorner<9, 9>() = ldlt.solve(Mat9::Identity());
  W.topLeftCorner<9, 9>() = 0.5 * (W.topLeftCorner<9, 9>() + W.topLeftCorner<9, 9>().transpose()).eval();
  const double wg = 1.0 / (pre.sigma_bg * pre.sigma_bg * pre.duration);
  const double wa = 1.0 / (pre.sigma_ba * pre.sigma_ba * pre.duration);
  W.block<3, 3>(9, 9) = wg * Mat3::Identity();
  W.block<3, 3>(12, 12) = wa * Mat3::Identity();
  return W;
}

InertialError inertial_error(const KeyframeState& x_k, const KeyframeState& x_k1,
                             const PreintegratedImu& pre, const Vec3& gravity,
                             InertialJacobians* jac) {
  const Mat3 Rk = x_k.q_GI.toRotationMatrix();
  const Mat3 Rk1 = x_k1.q_GI.toRotationMatrix();
  const Mat3 dR = pre.delta_rotation.toRotationMatrix();
  const double T = pre.duration;
  const Mat3 E = dR.transpose() * Rk.transpose() * Rk1;
  const Vec3 r_R = so3::log(Quat(E));
  const Vec3 y_v = Rk.transpose() * (x_k1.v_GI - x_k.v_GI - gravity * T);
  const Vec3 y_p =
      Rk.transpose() * (x_k1.p_GI - x_k.p_GI - x_k.v_GI * T - 0.5 * gravity * T * T);

  InertialError out;
  out.residual.segment<3>(0) = r_R;
  out.residual.segment<3>(3) = y_v - pre.delta_velocity;
  out.residual.segment<3>(6) = y_p - pre.delta_position;
  out.residual.segment<3>(9) = x_k1.b_g - x_k.b_g;
  out.residual.segment<3>(12) = x_k1.b_a - x_k.b_a;
  out.weight = inertial_weight(pre);

  if (jac != nullptr) {
    const Mat3 Jr_inv = so3::right_jacobian_inverse(r_R);
    const Mat3x21 J_R = pre.jacobian.topRows<3>();
    const Mat3x21 J_v = pre.jacobian.middleRows<3>(3);
    const Mat3x21 J_p = pre.jacobian.bottomRows<3>();
    Eigen::Matrix<double, 9, kImuParamDim> d_phi;
    d_phi.topRows<3>() = -Jr_inv * E.transpose() * J_R;
    d_phi.middleRows<3>(3) = -J_v;
    d_phi.bottomRows<3>() = -J_p;

    jac->d_xk.setZero();
    jac->d_xk.block<3, 3>(0, kKfRot) = -Jr_inv * Rk1.transpose() * Rk;
    jac->d_xk.block<3, 3>(3, kKfRot) = so3::hat(y_v);
    jac->d_xk.block<3, 3>(3, kKfVel) = -Rk.transpose();
    jac->d_xk.block<3, 3>(6, kKfRot) = so3::hat(y_p);
    jac->d_xk.block<3, 3>(6, kKfPos) = -Rk.transpose();
    jac->d_xk.block<3, 3>(6, kKfVel) = -Rk.transpose() * T;
    jac->d_xk.block<9, 3>(0, kKfBiasGyro) = d_phi.middleCols<3>(kPhiBg);
    jac->d_xk.block<9, 3>(0, kKfBiasAccel) = d_phi.middleCols<3>(kPhiBa);
    jac->d_xk.block<3, 3>(9, kKfBiasGyro) = -Mat3::Identity();
    jac->d_xk.block<3, 3>(12, kKfBiasAccel) = -Mat3::Identity();

    jac->d_xk1.setZero();
    jac->d_xk1.block<3, 3>(0, kKfRot) = Jr_inv;
    jac->d_xk1.block<3, 3>(3, kKfVel) = Rk.transpose();
    jac->d_xk1.block<3, 3>(6, kKfPos) = Rk.transpose();
    jac->d_xk1.block<3, 3>(9, kKfBiasGyro) = Mat3::Identity();
    jac->d_xk1.block<3, 3>(12, kKfBiasAccel) = Mat3::Identity();

    jac->d_intrinsics.setZero();
    jac->d_intrinsics.topRows<9>() = d_phi.rightCols<kImuIntrinsicsDim>();
  }
  return out;
}

BiasBridgeError bias_bridge_error(const KeyframeState& x_k, const KeyframeState& x_k1,
                                  double dt, const NoiseModel& noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("bias bridge needs a positive time gap");
  BiasBridgeError out;
  out.residual.head<3>() = x_k1.b_g - x_k.b_g;
  out.residual.tail<3>() = x_k1.b_a - x_k.b_a;
  out.weight_diagonal.head<3>().setConstant(1.0 / (noise.sigma_bg * noise.sigma_bg * dt));
  out.weight_diagonal.tail<3>().setConstant(1.0 / (noise.sigma_ba * noise.sigma_ba * dt));
  return out;
}

}  // namespace infocalib
