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

#include "infocalib/segment.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace infocalib {

std::vector<int> MotionSegment::landmark_ids() const {
  std::vector<int> ids;
  ids.reserve(landmarks.size());
  for (const Landmark& l : landmarks) ids.push_back(l.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

MotionSegment make_segment(const SessionData& session, int first, int count, int id) {
  const int total = static_cast<int>(session.keyframes.size());
  if (first < 0 || count < 1 || first + count > total) {
    throw std::invalid_argument("make_segment: keyframe range outside the session");
  }
  MotionSegment seg;
  seg.id = id;
  seg.session_id = session.session_id;
  seg.first_keyframe = first;
  seg.keyframes.assign(session.keyframes.begin() + first,
                       session.keyframes.begin() + first + count);
  const int last = first + count - 1;
  const double t0 = session.keyframes[first].t;
  const double t1 = last + 1 < total ? session.keyframes[last + 1].t : session.keyframes[last].t;
  for (const ImuSample& s : session.imu) {
    if (s.t >= t0 - 1e-9 && s.t <= t1 + 1e-9) seg.imu_samples.push_back(s);
  }
  std::vector<int> ids;
  for (const FeatureObservation& o : session.observations) {
    if (o.keyframe_id >= first && o.keyframe_id <= last) {
      seg.observations.push_back(o);
      ids.push_back(o.landmark_id);
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::unordered_map<int, const Landmark*> by_id;
  for (const Landmark& l : session.landmarks) by_id[l.id] = &l;
  for (int lid : ids) {
    auto it = by_id.find(lid);
    if (it == by_id.end()) throw std::invalid_argument("observation references unknown landmark");
    seg.landmarks.push_back(*it->second);
  }
  return seg;
}

std::vector<MotionSegment> segment_stream(const SessionData& session, int n, int first_segment_id) {
  if (n < 2) throw std::invalid_argument("segment_stream: N must be at least 2");
  std::vector<MotionSegment> out;
  const int total = static_cast<int>(session.keyframes.size());
  for (int first = 0; first + n <= total; first += n) {
    out.push_back(make_segment(session, first, n, first_segment_id + static_cast<int>(out.size())));
  }
  return out;
}

}  // namespace infocalib
