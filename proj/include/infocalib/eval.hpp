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
#include <string>
#include <vector>

#include "infocalib/problem.hpp"

namespace infocalib {

/// Yaw about gravity plus translation mapping the estimate onto the truth.
struct AlignmentResult {
  double yaw = 0.0;  // rad
  Vec3 translation = Vec3::Zero();
  double time_offset = 0.0;  // s, always 0 for simulator data

  Transform transform() const { return Transform(yaw_rotation(yaw), translation); }
};

/// Least-squares 4-DoF alignment of positions with identical timestamps.
/// Throws std::invalid_argument on fewer than 2 poses or a size mismatch.
AlignmentResult align(const std::vector<Transform>& estimate, const std::vector<Transform>& truth);

/// Per-timestep pose differences after alignment.
struct RmseReport {
  double translation_rmse = 0.0;  // m
  double rotation_rmse = 0.0;     // deg
  std::vector<double> translation_errors;  // m
  std::vector<double> rotation_errors;     // deg
};

RmseReport relative_pose_rmse(const std::vector<Transform>& estimate, const std::vector<Transform>& truth,
                              const AlignmentResult& alignment);

/// Mean and sample standard deviation of one calibration parameter. Rotations
/// are summarized by the angle of the averaged quaternion and the spread of
/// the angles to it.
struct ParameterSummary {
  std::string name;
  std::string unit;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> errors;  // per calibration, when a truth is given
};

/// Rows: fx fy cx cy w, q_CI angle, p_CI xyz, s_g xyz, m_g xyz, s_a xyz,
/// m_a xyz, q_AI angle. Throws std::invalid_argument on an empty list.
std::vector<ParameterSummary> parameter_report(const std::vector<CalibrationState>& calibrations,
                                               const std::optional<CalibrationState>& truth = std::nullopt);

/// Signed per-parameter errors on the 26 minimal coordinates, truth to
/// estimate; rotation entries are in rad.
Vec26 calibration_error(const CalibrationState& estimate, const CalibrationState& truth);

struct EvaluationOptions {
  double window_seconds = 10.0;
  SolverOptions solver{20, 1e-4, 1e-6, false};
};

struct TrajectoryEvaluation {
  RmseReport rmse;  // pooled over all windows
  int windows = 0;
  int failed_windows = 0;
};

/// Trajectory accuracy of a calibration: the session is cut into windows, each
/// window is solved with the calibration held constant from the initial
/// state estimates, aligned to the truth in 4 DoF and compared per keyframe.
TrajectoryEvaluation evaluate_trajectory(const SessionData& data, const std::vector<KeyframeState>& truth,
                                         const CalibrationState& calibration, const NoiseModel& noise,
                                         const EvaluationOptions& options = {});

}  // namespace infocalib
