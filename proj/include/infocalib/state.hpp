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

#include "infocalib/geometry.hpp"

namespace infocalib {

// Keyframe tangent layout used by the solver and the inertial factor.
inline constexpr int kKeyframeDim = 15;
inline constexpr int kKfRot = 0;
inline constexpr int kKfPos = 3;
inline constexpr int kKfVel = 6;
inline constexpr int kKfBiasGyro = 9;
inline constexpr int kKfBiasAccel = 12;

struct KeyframeState {
  double t = 0.0;  // s
  Quat q_GI = Quat::Identity();
  Vec3 p_GI = Vec3::Zero();  // m
  Vec3 v_GI = Vec3::Zero();  // m/s
  Vec3 b_g = Vec3::Zero();   // rad/s
  Vec3 b_a = Vec3::Zero();   // m/s^2

  Transform T_GI() const { return Transform(q_GI, p_GI); }

  /// Applies a tangent increment ordered [rot, pos, vel, b_g, b_a].
  KeyframeState retract(const Vec15& delta) const;
  /// Inverse of retract.
  Vec15 local_difference(const KeyframeState& other) const;
};

struct Landmark {
  int id = 0;
  Vec3 l_G = Vec3::Zero();  // m
};

}  // namespace infocalib
