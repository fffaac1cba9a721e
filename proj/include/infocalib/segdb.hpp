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
#include <optional>
#include <string>
#include <vector>

#include "infocalib/metrics.hpp"
#include "infocalib/problem.hpp"

namespace infocalib {

/// How segments are ranked for the database.
enum class Selection { kA, kD, kE, kRandom };

Selection parse_selection(std::string_view name);  // "a", "d", "e", "random"
std::string_view selection_name(Selection s);

/// Fixed-budget store of the most informative segments, ordered by
/// ascending metric value.
struct SegmentDatabase {
  int capacity = 8;
  Selection selection = Selection::kA;
  std::vector<MotionSegment> entries;
  // Scale shared by all entries so their metric values stay comparable.
  std::optional<MetricNormalization> normalization;

  bool full() const { return static_cast<int>(entries.size()) >= capacity; }
  double metric_sum() const;
};

enum class UpdateOutcome { kInserted, kReplaced, kDropped };
std::string_view outcome_name(UpdateOutcome o);

/// Inserts while below capacity, otherwise replaces the current maximum when
/// the new value is strictly lower. Segments with an infinite or NaN metric
/// value are always dropped. Throws std::invalid_argument on capacity < 1.
UpdateOutcome update_database(SegmentDatabase& db, MotionSegment segment);

enum class Strategy { kSingleSession, kMultiSession };

Strategy parse_strategy(std::string_view name);  // "single", "multi"
std::string_view strategy_name(Strategy s);

struct SessionOptions {
  Strategy strategy = Strategy::kSingleSession;
  int segment_keyframes = 40;
  bool eager = false;  // calibrate as soon as the database is full, then stop
  int max_shared = kDefaultMaxShared;
  std::uint64_t seed = 1;  // random selection
  SolverOptions solver;
};

struct SegmentRecord {
  int segment_id = 0;
  int session_id = 0;
  int first_keyframe = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  bool scored = false;  // random selection skips scoring
  SegmentScore score;
  double metric_value = 0.0;
  int calibration_rank = 0;
  UpdateOutcome outcome = UpdateOutcome::kDropped;
};

struct SessionReport {
  std::vector<SegmentRecord> segments;  // offered, in stream order
  bool calibrated = false;
  bool insufficient_data = false;
  SolverReport solver;
  std::vector<int> retained_ids;  // database contents after the session
  MetricNormalization normalization;
};

struct SessionResult {
  CalibrationState calibration;
  SessionReport report;
};

/// Scores a segment standalone at the given calibration and fills its score
/// and metric value. Returns the numerical rank of the calibration block.
int score_segment(MotionSegment& segment, const CalibrationState& calibration, const NoiseModel& noise,
                  const MetricNormalization& ref, MetricKind kind);

/// Segments of a session in stream order with their scores.
struct ScoredSession {
  std::vector<MotionSegment> segments;
  std::vector<SegmentRecord> records;  // outcome not yet set
  MetricNormalization normalization;
};

/// Cuts a session into segments and scores them at `calibration`. Without
/// `ref`, scores are normalized by the median marginal sigmas of the
/// session's full-rank segments. Random selection assigns i.i.d. uniform
/// keys drawn from (options.seed, session id) instead.
ScoredSession score_session(const SessionData& session, const CalibrationState& calibration, Selection selection,
                            const NoiseModel& noise, const std::optional<MetricNormalization>& ref,
                            const SessionOptions& options);

/// Offers scored segments to the database in order and calibrates when it
/// is full; see run_session.
SessionResult select_and_calibrate(ScoredSession scored, const CalibrationState& calibration, SegmentDatabase& db,
                                   const NoiseModel& noise, const SessionOptions& options);

/// One pass of the select-then-calibrate loop over a session. Segments are
/// cut, scored at `calibration`, and offered to the database in stream order.
/// Without `ref` the scores are normalized by the database normalization, or,
/// for an empty database, by the median marginal sigmas of this session's
/// full-rank segments. The single-session strategy starts from an empty
/// database.
/// When the database is full at the end of the session (or as soon as it
/// fills with `eager`), the retained segments are calibrated jointly.
/// Otherwise the calibration is returned unchanged with `insufficient_data`.
/// Throws SolverError when the joint solve fails.
SessionResult run_session(const SessionData& session, const CalibrationState& calibration, SegmentDatabase& db,
                          const NoiseModel& noise, const std::optional<MetricNormalization>& ref,
                          const SessionOptions& options);

/// Joint calibration over the database contents.
SolverReport calibrate_database(const SegmentDatabase& db, CalibrationState& calibration, const NoiseModel& noise,
                                const SessionOptions& options);

}  // namespace infocalib
