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

#include "infocalib/segdb.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace infocalib {

Selection parse_selection(std::string_view name) {
  if (name == "random") return Selection::kRandom;
  switch (parse_metric(name)) {
    case MetricKind::kA:
      return Selection::kA;
    case MetricKind::kD:
      return Selection::kD;
    case MetricKind::kE:
      return Selection::kE;
  }
  throw std::invalid_argument("unknown selection: " + std::string(name));
}

std::string_view selection_name(Selection s) {
  switch (s) {
    case Selection::kA:
      return "a";
    case Selection::kD:
      return "d";
    case Selection::kE:
      return "e";
    case Selection::kRandom:
      return "random";
  }
  return "?";
}

namespace {

MetricKind metric_of(Selection s) {
  switch (s) {
    case Selection::kD:
      return MetricKind::kD;
    case Selection::kE:
      return MetricKind::kE;
    default:
      return MetricKind::kA;
  }
}

}  // namespace

double SegmentDatabase::metric_sum() const {
  double sum = 0.0;
  for (const MotionSegment& s : entries) sum += s.metric_value;
  return sum;
}

std::string_view outcome_name(UpdateOutcome o) {
  switch (o) {
    case UpdateOutcome::kInserted:
      return "inserted";
    case UpdateOutcome::kReplaced:
      return "replaced";
    case UpdateOutcome::kDropped:
      return "dropped";
  }
  return "?";
}

UpdateOutcome update_database(SegmentDatabase& db, MotionSegment segment) {
  if (db.capacity < 1) throw std::invalid_argument("segment database capacity must be at least 1");
  const double value = segment.metric_value;
  if (!std::isfinite(value)) return UpdateOutcome::kDropped;
  UpdateOutcome outcome = UpdateOutcome::kInserted;
  if (db.full()) {
    // Ties keep the incumbent.
    if (!(value < db.entries.back().metric_value)) return UpdateOutcome::kDropped;
    db.entries.pop_back();
    outcome = UpdateOutcome::kReplaced;
  }
  auto pos = std::upper_bound(db.entries.begin(), db.entries.end(), value,
                              [](double v, const MotionSegment& s) { return v < s.metric_value; });
  db.entries.insert(pos, std::move(segment));
  return outcome;
}

Strategy parse_strategy(std::string_view name) {
  if (name == "single" || name == "single_session") return Strategy::kSingleSession;
  if (name == "multi" || name == "multi_session") return Strategy::kMultiSession;
  throw std::invalid_argument("unknown strategy: " + std::string(name));
}

std::string_view strategy_name(Strategy s) {
  return s == Strategy::kSingleSession ? "single" : "multi";
}

int score_segment(MotionSegment& segment, const CalibrationState& calibration, const NoiseModel& noise,
                  const MetricNormalization& ref, MetricKind kind) {
  const MarginalCovariance mc = segment_marginal_covariance(segment, calibration, noise);
  segment.score = score(mc, ref);
  segment.metric_value = metric_value(segment.score, kind);
  return mc.rank;
}

SolverReport calibrate_database(const SegmentDatabase& db, CalibrationState& calibration, const NoiseModel& noise,
                                const SessionOptions& options) {
  CalibrationProblem p = build_segment_problem(db.entries, calibration, noise, options.max_shared);
  SolverReport report = solve(p, options.solver);
  calibration = p.calibration;
  return report;
}

ScoredSession score_session(const SessionData& session, const CalibrationState& calibration, Selection selection,
                            const NoiseModel& noise, const std::optional<MetricNormalization>& ref,
                            const SessionOptions& options) {
  ScoredSession out;
  out.segments = segment_stream(session, options.segment_keyframes, session.session_id * 1000000);
  const int n = static_cast<int>(out.segments.size());
  std::vector<int> ranks(out.segments.size(), 0);
  if (selection == Selection::kRandom) {
    // Keeping the smallest of i.i.d. uniform keys is uniform sampling
    // without replacement, also across sessions.
    std::seed_seq seq{options.seed, static_cast<std::uint64_t>(session.session_id)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (MotionSegment& s : out.segments) s.metric_value = u(rng);
    if (ref) out.normalization = *ref;
  } else {
    const MetricKind kind = metric_of(selection);
    std::vector<MarginalCovariance> covs(out.segments.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) covs[i] = segment_marginal_covariance(out.segments[i], calibration, noise);
    if (ref) {
      out.normalization = *ref;
    } else {
      std::vector<Mat26x26> full_rank;
      for (const auto& c : covs) {
        if (!c.rank_deficient) full_rank.push_back(c.matrix);
      }
      if (!full_rank.empty()) out.normalization = reference_sigmas(full_rank);
    }
    for (int i = 0; i < n; ++i) {
      out.segments[i].score = score(covs[i], out.normalization);
      out.segments[i].metric_value = metric_value(out.segments[i].score, kind);
      ranks[i] = covs[i].rank;
    }
  }
  out.records.resize(out.segments.size());
  for (int i = 0; i < n; ++i) {
    SegmentRecord& r = out.records[i];
    const MotionSegment& s = out.segments[i];
    r.segment_id = s.id;
    r.session_id = s.session_id;
    r.first_keyframe = s.first_keyframe;
    r.t_start = s.keyframes.front().t;
    r.t_end = s.keyframes.back().t;
    r.scored = selection != Selection::kRandom;
    r.score = s.score;
    r.metric_value = s.metric_value;
    r.calibration_rank = ranks[i];
  }
  return out;
}

SessionResult select_and_calibrate(ScoredSession scored, const CalibrationState& calibration, SegmentDatabase& db,
                                   const NoiseModel& noise, const SessionOptions& options) {
  if (db.capacity < 1) throw std::invalid_argument("segment database capacity must be at least 1");
  if (options.strategy == Strategy::kSingleSession) db.entries.clear();
  SessionResult out;
  out.calibration = calibration;
  out.report.normalization = scored.normalization;
  std::vector<SegmentRecord>& records = out.report.segments;
  records = std::move(scored.records);
  size_t offered = 0;
  for (; offered < scored.segments.size(); ++offered) {
    records[offered].outcome = update_database(db, std::move(scored.segments[offered]));
    if (options.eager && db.full()) {
      ++offered;
      break;
    }
  }
  records.resize(offered);

  if (db.full()) {
    out.report.solver = calibrate_database(db, out.calibration, noise, options);
    out.report.calibrated = true;
  } else {
    out.report.insufficient_data = true;
  }
  for (const MotionSegment& s : db.entries) out.report.retained_ids.push_back(s.id);
  return out;
}

SessionResult run_session(const SessionData& session, const CalibrationState& calibration, SegmentDatabase& db,
                          const NoiseModel& noise, const std::optional<MetricNormalization>& ref,
                          const SessionOptions& options) {
  if (db.capacity < 1) throw std::invalid_argument("segment database capacity must be at least 1");
  if (options.strategy == Strategy::kSingleSession) {
    db.entries.clear();
    db.normalization.reset();
  }
  ScoredSession scored = score_session(session, calibration, db.selection, noise, ref ? ref : db.normalization,
                                       options);
  if (db.selection != Selection::kRandom || ref) db.normalization = scored.normalization;
  return select_and_calibrate(std::move(scored), calibration, db, noise, options);
}

}  // namespace infocalib
