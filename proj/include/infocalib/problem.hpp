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

#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "infocalib/calibration.hpp"
#include "infocalib/segment.hpp"

namespace infocalib {

/// Which parts of a keyframe are held constant.
enum class KeyframeGauge {
  kFree,
  kAnchor,  // position and rotation about gravity fixed
  kFixed,   // all 15 coordinates fixed
};

struct CameraFactor {
  int keyframe = 0;  // index into CalibrationProblem::keyframes
  int landmark = 0;  // index into CalibrationProblem::landmarks
  Vec2 uv = Vec2::Zero();
  double sigma = 1.0;
};

struct InertialFactor {
  int k0 = 0;
  int k1 = 0;
  std::vector<ImuSample> samples;  // from keyframes[k0].t to keyframes[k1].t
  Mat15 weight = Mat15::Identity();
  Mat15 sqrt_weight = Mat15::Identity();  // upper triangular, U^T U = weight
};

/// Bias random walk across a gap of removed keyframes.
struct BiasBridgeFactor {
  int k0 = 0;
  int k1 = 0;
  double dt = 0.0;
};

struct KeyframeKey {
  int session = 0;
  int index = 0;
  auto operator<=>(const KeyframeKey&) const = default;
};

struct Partition {
  std::vector<int> segment_ids;  // ordered by (session, first keyframe)
  struct Range {
    int session;
    int first;
    int last;
  };
  std::vector<Range> keyframe_ranges;
  KeyframeKey anchor;
};

struct CalibrationProblem {
  std::vector<KeyframeState> keyframes;
  std::vector<KeyframeKey> keyframe_keys;  // session/index of each keyframe
  std::vector<Landmark> landmarks;
  CalibrationState calibration;
  NoiseModel noise;
  std::vector<CameraFactor> camera_factors;  // sorted by (keyframe, landmark)
  std::vector<InertialFactor> inertial_factors;
  std::vector<BiasBridgeFactor> bridge_factors;
  std::vector<KeyframeGauge> gauge;  // per keyframe
  bool calibration_constant = false;
  bool huber = false;  // Huber loss on camera factors at 2 sigma
  std::vector<Partition> partitions;

  int num_keyframes() const { return static_cast<int>(keyframes.size()); }
  int num_landmarks() const { return static_cast<int>(landmarks.size()); }
  void validate() const;  // throws std::invalid_argument on dangling indices
};

/// One camera factor per observation, one inertial factor per consecutive
/// keyframe pair, gauge anchor on keyframe 0. Observation keyframe ids index
/// `keyframes`; landmark ids refer to Landmark::id.
CalibrationProblem build_batch_problem(const std::vector<KeyframeState>& keyframes,
                                       const std::vector<Landmark>& landmarks,
                                       const std::vector<FeatureObservation>& observations,
                                       const std::vector<ImuSample>& imu_stream,
                                       const CalibrationState& calib_init,
                                       const NoiseModel& noise);

inline constexpr int kDefaultMaxShared = 10;

/// Groups segments that are temporally adjacent or share more than
/// `max_shared` landmarks, transitively. The result does not depend on the
/// input order.
std::vector<Partition> partition_segments(const std::vector<MotionSegment>& segments,
                                          int max_shared = kDefaultMaxShared);

/// Factor graph over the union of the segments: within-segment factors as in
/// the batch problem, inertial factors between temporally adjacent segments,
/// bias-only bridges across gaps within a session, and one gauge anchor per
/// partition. Landmarks seen fewer than twice are dropped.
CalibrationProblem build_segment_problem(const std::vector<MotionSegment>& segments,
                                         const CalibrationState& calib_init,
                                         const NoiseModel& noise,
                                         int max_shared = kDefaultMaxShared);

// Column layout of the full Jacobian: keyframes (15 each), landmarks (3 each),
// calibration (26).
inline int keyframe_column(int k) { return kKeyframeDim * k; }
inline int landmark_column(const CalibrationProblem& p, int m) {
  return kKeyframeDim * p.num_keyframes() + 3 * m;
}
inline int calibration_column(const CalibrationProblem& p) {
  return kKeyframeDim * p.num_keyframes() + 3 * p.num_landmarks();
}
inline int num_columns(const CalibrationProblem& p) { return calibration_column(p) + kCalibDim; }

// Per-factor linearization shared by the solver, scoring and residual export.
struct CameraLinearization {
  bool valid = false;  // false when the point is behind the camera
  Vec2 residual = Vec2::Zero();  // predicted - measured, px
  Mat26 d_pose;                  // keyframe rot, pos
  Mat23 d_landmark;
  Eigen::Matrix<double, 2, 11> d_calib;  // f, c, w, q_CI, p_CI
};

struct InertialLinearization {
  Vec15 residual;
  Mat15 d_k0;
  Mat15 d_k1;
  Eigen::Matrix<double, 15, kImuIntrinsicsDim> d_imu;  // calibration columns 11..25
};

struct Linearization {
  std::vector<CameraLinearization> camera;
  std::vector<InertialLinearization> inertial;
  std::vector<Vec6> bridge;  // residuals; Jacobians are -I / +I on the biases
  int skipped_camera_factors = 0;
};

Linearization linearize(const CalibrationProblem& problem, bool with_jacobians = true);

/// Orthonormal basis [b1 b2 n] of the anchor's rotation tangent, where n is
/// the gravity axis in the keyframe frame.
Mat3 anchor_rotation_basis(const Quat& q_GI);

struct CostBreakdown {
  double total = 0.0;
  double camera = 0.0;
  double inertial = 0.0;
  double bridge = 0.0;
  int skipped_camera_factors = 0;
};

/// S = sum of r^T W r (Huber-adjusted on camera factors when enabled).
CostBreakdown evaluate_cost(const CalibrationProblem& problem);

struct ResidualEvaluation {
  Eigen::VectorXd residual;
  std::vector<Eigen::MatrixXd> block_weights;
  std::vector<int> block_offsets;  // first row of each block in `residual`
  Eigen::SparseMatrix<double> jacobian;  // constant-masked columns zeroed
  int skipped_camera_factors = 0;
};

/// Residual blocks ordered camera factors by (keyframe, landmark), then
/// inertial factors by keyframe, then bias bridges.
ResidualEvaluation evaluate_residuals(const CalibrationProblem& problem);

/// Applies a full-length tangent increment (num_columns) to every state.
void retract_problem(CalibrationProblem& problem, const Eigen::VectorXd& delta);

struct SolverOptions {
  int max_iters = 50;
  double lambda_init = 1e-4;
  double tol = 1e-8;  // relative cost decrease
  bool verbose = false;
};

struct SolverReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::string termination;
  int skipped_camera_factors = 0;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Levenberg-Marquardt on S with landmarks eliminated by Schur complement.
/// Throws SolverError on a non-finite initial cost or when the damped normal
/// equations cannot be factorized.
SolverReport solve(CalibrationProblem& problem, const SolverOptions& options = {});

/// Sets the thread count used by parallel factor evaluation (no-op without
/// OpenMP).
void set_num_threads(int n);

}  // namespace infocalib
