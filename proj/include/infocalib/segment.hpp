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

#include <limits>
#include <vector>

#include "infocalib/camera.hpp"
#include "infocalib/imu.hpp"
#include "infocalib/state.hpp"

namespace infocalib {

/// Information criteria of a segment's normalized calibration covariance.
/// Lower is more informative; rank-deficient segments score +inf.
struct SegmentScore {
  double a_opt = std::numeric_limits<double>::infinity();
  double d_opt = std::numeric_limits<double>::infinity();
  double e_opt = std::numeric_limits<double>::infinity();
  double entropy = std::numeric_limits<double>::infinity();
  bool rank_deficient = true;
};

/// Measurements and state estimates of one recording session. Observation
/// keyframe ids index `keyframes`; landmark ids refer to Landmark::id.
struct SessionData {
  int session_id = 0;
  std::vector<KeyframeState> keyframes;
  std::vector<Landmark> landmarks;
  std::vector<FeatureObservation> observations;
  std::vector<ImuSample> imu;
};

/// N consecutive keyframes of a session with everything needed to rebuild
/// their factors. Observation keyframe ids are session keyframe indices.
struct MotionSegment {
  int id = 0;
  int session_id = 0;
  int first_keyframe = 0;  // session index of keyframes.front()
  std::vector<KeyframeState> keyframes;
  // Covers keyframes.front().t up to the next session keyframe after the
  // last one when it exists, so adjacent segments can be joined.
  std::vector<ImuSample> imu_samples;
  std::vector<FeatureObservation> observations;
  std::vector<Landmark> landmarks;  // sorted by id
  SegmentScore score;
  double metric_value = std::numeric_limits<double>::infinity();

  int size() const { return static_cast<int>(keyframes.size()); }
  int last_keyframe() const { return first_keyframe + size() - 1; }
  std::vector<int> landmark_ids() const;  // sorted
};

/// Consecutive non-overlapping windows of n keyframes; the remainder is
/// dropped. Throws std::invalid_argument if n < 2.
std::vector<MotionSegment> segment_stream(const SessionData& session, int n, int first_segment_id = 0);

/// Segment built from an arbitrary keyframe range [first, first + count).
MotionSegment make_segment(const SessionData& session, int first, int count, int id);

}  // namespace infocalib
