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

#include "infocalib/calibration.hpp"

namespace infocalib {

void CalibrationState::validate() const {
  camera.validate();
  imu.validate();
}

CalibrationState CalibrationState::retract(const Vec26& d) const {
  CalibrationState out = *this;
  out.camera.focal += d.segment<2>(kCalFocal);
  out.camera.principal_point += d.segment<2>(kCalPrincipal);
  out.camera.distortion += d(kCalDistortion);
  out.extrinsics.T_CI.rotation =
      infocalib::retract(extrinsics.T_CI.rotation, d.segment<3>(kCalExtRot));
  out.extrinsics.T_CI.translation += d.segment<3>(kCalExtPos);
  out.imu.s_g += d.segment<3>(kCalSg);
  out.imu.m_g += d.segment<3>(kCalMg);
  out.imu.s_a += d.segment<3>(kCalSa);
  out.imu.m_a += d.segment<3>(kCalMa);
  out.imu.q_AI = infocalib::retract(imu.q_AI, d.segment<3>(kCalQai));
  return out;
}

Vec26 CalibrationState::local_difference(const CalibrationState& o) const {
  Vec26 d;
  d.segment<2>(kCalFocal) = o.camera.focal - camera.focal;
  d.segment<2>(kCalPrincipal) = o.camera.principal_point - camera.principal_point;
  d(kCalDistortion) = o.camera.distortion - camera.distortion;
  d.segment<3>(kCalExtRot) =
      infocalib::local_difference(extrinsics.T_CI.rotation, o.extrinsics.T_CI.rotation);
  d.segment<3>(kCalExtPos) = o.extrinsics.T_CI.translation - extrinsics.T_CI.translation;
  d.segment<3>(kCalSg) = o.imu.s_g - imu.s_g;
  d.segment<3>(kCalMg) = o.imu.m_g - imu.m_g;
  d.segment<3>(kCalSa) = o.imu.s_a - imu.s_a;
  d.segment<3>(kCalMa) = o.imu.m_a - imu.m_a;
  d.segment<3>(kCalQai) = infocalib::local_difference(imu.q_AI, o.imu.q_AI);
  return d;
}

const std::array<std::string_view, kCalibDim>& calibration_parameter_names() {
  static const std::array<std::string_view, kCalibDim> names = {
      "fx",     "fy",     "cx",     "cy",     "w",      "q_CI_x", "q_CI_y",
      "q_CI_z", "p_CI_x", "p_CI_y", "p_CI_z", "s_g_x",  "s_g_y",  "s_g_z",
      "m_g_x",  "m_g_y",  "m_g_z",  "s_a_x",  "s_a_y",  "s_a_z",  "m_a_x",
      "m_a_y",  "m_a_z",  "q_AI_x", "q_AI_y", "q_AI_z"};
  return names;
}

}  // namespace infocalib
