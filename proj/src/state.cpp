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

#include "infocalib/state.hpp"

namespace infocalib {

KeyframeState KeyframeState::retract(const Vec15& delta) const {
  KeyframeState out = *this;
  out.q_GI = infocalib::retract(q_GI, delta.segment<3>(kKfRot));
  out.p_GI += delta.segment<3>(kKfPos);
  out.v_GI += delta.segment<3>(kKfVel);
  out.b_g += delta.segment<3>(kKfBiasGyro);
  out.b_a += delta.segment<3>(kKfBiasAccel);
  return out;
}

Vec15 KeyframeState::local_difference(const KeyframeState& other) const {
  Vec15 d;
  d.segment<3>(kKfRot) = infocalib::local_difference(q_GI, other.q_GI);
  d.segment<3>(kKfPos) = other.p_GI - p_GI;
  d.segment<3>(kKfVel) = other.v_GI - v_GI;
  d.segment<3>(kKfBiasGyro) = other.b_g - b_g;
  d.segment<3>(kKfBiasAccel) = other.b_a - b_a;
  return d;
}

}  // namespace infocalib
