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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "infocalib/calibration.hpp"
#include "infocalib/segment.hpp"

namespace infocalib {

struct Sinusoid {
  int axis = 0;            // 0, 1, 2
  double amplitude = 0.0;  // m for translation, rad for rotation
  double frequency = 0.0;  // Hz of warped time
  double phase = 0.0;      // rad
};

/// Interval with constant translation and rotation progress rates. Rates of
/// zero freeze the corresponding motion; transitions use a quintic ramp.
struct MotionPhase {
  double duration = 1.0;  // s
  double translation_rate = 1.0;
  double rotation_rate = 1.0;
};

struct TrajectorySpec {
  Vec3 center = Vec3::Zero();
  std::vector<Sinusoid> translation;
  std::vector<Sinusoid> rotation;  // tangent-space angles applied in the body frame
  Quat base_rotation = Quat::Identity();
  double yaw0 = 0.0;          // rad
  double yaw_per_unit = 0.0;  // rad per unit of translation progress
  std::vector<MotionPhase> phases;  // empty: always fully moving
  bool cycle_phases = false;        // repeat the phases, otherwise the last one extends
  double ramp = 1.0;                // s
};

struct ScenarioConfig {
  std::string name = "custom";
  double duration = 60.0;     // s
  double camera_rate = 10.0;  // Hz
  double imu_rate = 100.0;    // Hz
  TrajectorySpec trajectory;

  int landmark_count = 800;
  Vec3 world_min{-4.0, -3.0, -1.5};  // landmarks are spread over the faces of this box, m
  Vec3 world_max{4.0, 3.0, 1.5};
  double max_range = 12.0;    // m
  double min_depth = 0.2;     // m
  int image_width = 640;
  int image_height = 480;
  double image_margin = 2.0;  // px
  int max_features = 60;      // per keyframe
  int max_track_length = 20;  // keyframes with camera motion
  int min_track_length = 3;
  double min_parallax = 3.0 * 3.14159265358979323846 / 180.0;  // rad, between first and last ray

  CalibrationState calibration;
  NoiseModel noise;
  bool add_noise = true;  // measurement noise and bias random walk
  Vec3 initial_gyro_bias{2e-3, -1.5e-3, 1e-3};    // rad/s
  Vec3 initial_accel_bias{4e-2, -3e-2, 5e-2};     // m/s^2

  // Standard deviations of the initializer perturbations.
  double init_position = 0.02;   // m
  double init_rotation = 0.5 * 3.14159265358979323846 / 180.0;  // rad
  double init_velocity = 0.02;   // m/s
  double init_landmark = 0.05;   // m
  double init_gyro_bias = 5e-4;  // rad/s
  double init_accel_bias = 1e-2; // m/s^2

  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument naming the field
  int imu_per_keyframe() const;
};

/// Calibration used as ground truth by the presets.
CalibrationState reference_calibration();

/// Uncalibrated starting point: nominal focal length and principal point,
/// unit scales, no misalignment, identity rotations, zero offset.
CalibrationState nominal_calibration();

/// Presets: "arvr" (rotation rich, room scale), "nav" (translation with turns
/// around a hall), "still" (no motion). Throws std::invalid_argument otherwise.
ScenarioConfig preset_config(std::string_view name);

/// Configuration of the index-th recording session of a corpus. Index 0 is
/// `base` itself; later sessions get their own seed and start the motion
/// pattern at seeded random offsets.
ScenarioConfig session_config(const ScenarioConfig& base, int index);

struct TrajectoryPoint {
  Quat q_GI;
  Vec3 p_GI;
  Vec3 v_GI;
  Vec3 a_GI;
  Vec3 omega_I;  // body-frame angular velocity
};

class Trajectory {
 public:
  explicit Trajectory(TrajectorySpec spec);

  TrajectoryPoint sample(double t) const;

  // Warped progress of translation and rotation and its first two derivatives.
  struct Progress {
    double tau;
    double rate;
    double accel;
  };
  Progress translation_progress(double t) const { return progress(t, true); }
  Progress rotation_progress(double t) const { return progress(t, false); }

 private:
  Progress progress(double t, bool translation) const;

  TrajectorySpec spec_;
  std::vector<double> phase_start_;
};

Trajectory generate_trajectory(const ScenarioConfig& cfg);

struct SimulatedSession {
  ScenarioConfig config;
  CalibrationState calibration;  // ground truth
  std::vector<KeyframeState> truth_keyframes;
  std::vector<Landmark> truth_landmarks;
  std::vector<ImuSample> imu;
  std::vector<FeatureObservation> observations;  // sorted by (keyframe, landmark)
  std::vector<KeyframeState> init_keyframes;
  std::vector<Landmark> init_landmarks;

  /// Measurements with the perturbed initial states.
  SessionData session_data(int session_id = 0) const;
  /// Measurements with the ground-truth states.
  SessionData truth_session_data(int session_id = 0) const;
};

/// Throws std::runtime_error if a keyframe ends up with fewer than 3
/// observed landmarks.
SimulatedSession generate_measurements(const ScenarioConfig& cfg, const Trajectory& trajectory);

inline SimulatedSession simulate(const ScenarioConfig& cfg) {
  return generate_measurements(cfg, generate_trajectory(cfg));
}

}  // namespace infocalib
