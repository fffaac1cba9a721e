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

#include <string_view>
#include <vector>

#include "infocalib/problem.hpp"

namespace infocalib {

/// Covariance of the 26 calibration coordinates with every other state
/// marginalized out.
struct MarginalCovariance {
  Mat26x26 matrix = Mat26x26::Zero();
  bool rank_deficient = false;
  int rank = 0;  // numerical rank of the calibration information
};

struct MetricNormalization {
  Vec26 sigma_ref = Vec26::Ones();
  void validate() const;  // throws std::invalid_argument on non-positive entries
};

enum class MetricKind { kA, kD, kE };

MetricKind parse_metric(std::string_view name);  // "a", "d", "e"
std::string_view metric_name(MetricKind kind);

inline constexpr double kRankTolerance = 1e-10;

/// Marginal covariance of the calibration from a rank-revealing multifrontal
/// QR of the whitened Jacobian, eliminating landmarks, then keyframes, with
/// the calibration last. Gauge-fixed coordinates of `problem` are removed and
/// unobservable nuisance directions are dropped.
MarginalCovariance marginal_covariance(const CalibrationProblem& problem);

/// Rows of a whitened Jacobian restricted to a few variables. Columns are
/// grouped by variable in the order of `variables`, which must be ascending.
struct WhitenedBlock {
  std::vector<int> variables;
  Eigen::MatrixXd A;
};

/// Same elimination over explicit blocks. Variables are eliminated in index
/// order; the last one must be the 26-dimensional calibration.
MarginalCovariance marginal_covariance(const std::vector<int>& variable_sizes,
                                       std::vector<WhitenedBlock> blocks);

/// Scores one segment on its own: a single-segment problem at the given
/// calibration with its first keyframe as the gauge anchor.
MarginalCovariance segment_marginal_covariance(const MotionSegment& segment,
                                               const CalibrationState& calibration,
                                               const NoiseModel& noise);

/// diag(sigma_ref)^-1 * sigma * diag(sigma_ref)^-1
Mat26x26 normalize_covariance(const Mat26x26& sigma, const MetricNormalization& ref);

/// Trace, determinant, largest eigenvalue and differential entropy of a
/// normalized covariance. Throws std::invalid_argument if the input is not
/// symmetric positive semi-definite within tolerance.
SegmentScore score(const Mat26x26& sigma_norm);

/// Score of a possibly rank-deficient covariance; rank-deficient inputs give
/// the default (infinite) score.
SegmentScore score(const MarginalCovariance& sigma, const MetricNormalization& ref);

double metric_value(const SegmentScore& s, MetricKind kind);

/// Per-parameter median over the covariances of sqrt(diagonal). Throws
/// std::invalid_argument on an empty list.
MetricNormalization reference_sigmas(const std::vector<Mat26x26>& covariances);

}  // namespace infocalib
