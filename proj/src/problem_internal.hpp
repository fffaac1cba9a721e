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

#include "infocalib/problem.hpp"

namespace infocalib {

/// IRLS weight of a camera factor (1 unless the Huber loss is active and the
/// whitened residual exceeds the threshold).
double huber_weight(const CalibrationProblem& p, const CameraLinearization& l, double sigma);

/// Maps a keyframe's Jacobian columns into the coordinates the solver and the
/// scoring use: anchors get their rotation columns expressed in
/// anchor_rotation_basis with the gravity-axis column and the position
/// columns zeroed; fixed keyframes are zeroed entirely.
Mat15 keyframe_column_transform(const CalibrationProblem& p, int k);

}  // namespace infocalib
