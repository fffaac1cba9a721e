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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <random>

#include "dense_oracle.hpp"
#include "infocalib/metrics.hpp"
#include "sim_fixtures.hpp"
#include "test_util.hpp"

namespace infocalib {
namespace {

using testing::dense_from_blocks;
using testing::dense_marginal_covariance;
using testing::dense_trailing_block;
using testing::relative_frobenius;

struct BlockProblem {
  std::vector<int> sizes;
  std::vector<WhitenedBlock> blocks;
};

// Random camera-like, inertial-like and per-keyframe prior blocks: landmarks
// first, then keyframes, calibration last.
BlockProblem random_block_problem(std::mt19937_64& rng, int K, int L) {
  std::normal_distribution<double> n(0.0, 1.0);
  BlockProblem bp;
  for (int m = 0; m < L; ++m) bp.sizes.push_back(3);
  for (int k = 0; k < K; ++k) bp.sizes.push_back(15);
  bp.sizes.push_back(kCalibDim);
  const int calib = L + K;
  auto random_matrix = [&](int r, int c) {
    Eigen::MatrixXd M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = n(rng);
    return M;
  };
  for (int m = 0; m < L; ++m) {
    WhitenedBlock b;
    b.variables.push_back(m);
    for (int k = 0; k < K; ++k) b.variables.push_back(L + k);
    b.variables.push_back(calib);
    b.A = random_matrix(2 * K, 3 + 15 * K + kCalibDim);
    bp.blocks.push_back(std::move(b));
  }
  for (int k = 0; k + 1 < K; ++k) {
    bp.blocks.push_back({{L + k, L + k + 1, calib}, random_matrix(15, 30 + kCalibDim)});
  }
  for (int k = 0; k < K; ++k) bp.blocks.push_back({{L + k, calib}, random_matrix(15, 15 + kCalibDim)});
  return bp;
}

TEST(MarginalCovariance, OrthonormalSystemGivesIdentity) {
  std::vector<int> sizes{3, kCalibDim};
  std::vector<WhitenedBlock> blocks{{{0}, Eigen::MatrixXd::Identity(3, 3)},
                                    {{1}, Eigen::MatrixXd::Identity(kCalibDim, kCalibDim)}};
  const auto mc = marginal_covariance(sizes, blocks);
  ASSERT_FALSE(mc.rank_deficient);
  EXPECT_LT((mc.matrix - Mat26x26::Identity()).norm(), 1e-14);
}

TEST(MarginalCovariance, MatchesDenseInverseOnRandomSmallSystems) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 3 + trial % 3;
    const int L = 10 + static_cast<int>(rng() % 21);
    const auto bp = random_block_problem(rng, K, L);
    const auto mc = marginal_covariance(bp.sizes, bp.blocks);
    ASSERT_FALSE(mc.rank_deficient);
    const Eigen::MatrixXd J = dense_from_blocks(bp.sizes, bp.blocks);
    const auto dense = dense_trailing_block(J, Eigen::MatrixXd::Identity(J.rows(), J.rows()));
    ASSERT_FALSE(dense.singular);
    EXPECT_LT(relative_frobenius(mc.matrix, dense.trailing), 1e-6) << "trial " << trial;
  }
}

TEST(MarginalCovariance, ScalingWeightsByFourScalesCovarianceByQuarter) {
  std::mt19937_64 rng(2);
  auto bp = random_block_problem(rng, 4, 12);
  const auto before = marginal_covariance(bp.sizes, bp.blocks);
  for (auto& b : bp.blocks) b.A *= 2.0;
  const auto after = marginal_covariance(bp.sizes, bp.blocks);
  EXPECT_LT(relative_frobenius(after.matrix, 0.25 * before.matrix), 1e-12);
}

TEST(MarginalCovariance, AddingABlockNeverIncreasesMetrics) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto bp = random_block_problem(rng, 3 + trial % 3, 10 + trial);
    const SegmentScore s0 = score(marginal_covariance(bp.sizes, bp.blocks), {});
    const int K = 3 + trial % 3;
    const int L = 10 + trial;
    Eigen::MatrixXd A(4, 15 + kCalibDim);
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) A(i, j) = n(rng);
    bp.blocks.push_back({{L + static_cast<int>(rng() % K), L + K}, A});
    const SegmentScore s1 = score(marginal_covariance(bp.sizes, bp.blocks), {});
    EXPECT_LE(s1.a_opt, s0.a_opt * (1 + 1e-12));
    EXPECT_LE(s1.d_opt, s0.d_opt * (1 + 1e-12));
    EXPECT_LE(s1.e_opt, s0.e_opt * (1 + 1e-12));
  }
}

TEST(MarginalCovariance, RejectsMalformedBlocks) {
  std::vector<int> sizes{3, kCalibDim};
  EXPECT_THROW(marginal_covariance(sizes, {{{1, 0}, Eigen::MatrixXd::Zero(2, 29)}}), std::invalid_argument);
  EXPECT_THROW(marginal_covariance(sizes, {{{0}, Eigen::MatrixXd::Zero(2, 4)}}), std::invalid_argument);
  EXPECT_THROW(marginal_covariance({3, 3}, {}), std::invalid_argument);
}

TEST(SegmentMarginalCovariance, MatchesDenseOracleOnSimulatedSegments) {
  const auto& s = testing::noisy_session(4.0);
  const auto segs = segment_stream(s.session_data(), 20);
  for (const auto& seg : segs) {
    const auto p = build_segment_problem({seg}, nominal_calibration(), s.config.noise);
    const auto mc = marginal_covariance(p);
    ASSERT_FALSE(mc.rank_deficient);
    EXPECT_EQ(mc.rank, kCalibDim);
    const auto dense = dense_marginal_covariance(p);
    ASSERT_FALSE(dense.singular);
    EXPECT_LT(relative_frobenius(mc.matrix, dense.trailing), 1e-6);
    // Symmetric and positive definite.
    EXPECT_LT((mc.matrix - mc.matrix.transpose()).norm(), 1e-12 * mc.matrix.norm());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat26x26>(mc.matrix).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(SegmentMarginalCovariance, FewKeyframesCannotDetermineImuIntrinsics) {
  const auto& s = testing::noisy_session(4.0);
  const auto segs = segment_stream(s.session_data(), 4);
  const auto mc = segment_marginal_covariance(segs[2], nominal_calibration(), s.config.noise);
  EXPECT_TRUE(mc.rank_deficient);
  EXPECT_LT(mc.rank, kCalibDim);
  EXPECT_TRUE(score(mc, {}).rank_deficient);
  EXPECT_TRUE(std::isinf(metric_value(score(mc, {}), MetricKind::kA)));
}

TEST(SegmentMarginalCovariance, ScalesWithNoise) {
  const auto& s = testing::noisy_session(4.0);
  const auto segs = segment_stream(s.session_data(), 20);
  auto p = build_segment_problem({segs[0]}, nominal_calibration(), s.config.noise);
  const auto before = marginal_covariance(p);
  for (auto& f : p.camera_factors) f.sigma *= 0.5;
  for (auto& f : p.inertial_factors) {
    f.weight *= 4.0;
    f.sqrt_weight *= 2.0;
  }
  const auto after = marginal_covariance(p);
  EXPECT_LT(relative_frobenius(after.matrix, 0.25 * before.matrix), 1e-9);
}

TEST(NormalizeCovariance, Examples) {
  std::mt19937_64 rng(4);
  Mat26x26 A = Mat26x26::Random();
  const Mat26x26 S = A * A.transpose() + Mat26x26::Identity();
  EXPECT_EQ(normalize_covariance(S, {}), S);
  MetricNormalization ref;
  ref.sigma_ref = S.diagonal().cwiseSqrt();
  const Mat26x26 corr = normalize_covariance(S, ref);
  EXPECT_LT((corr.diagonal() - Vec26::Ones()).norm(), 1e-14);
  for (int i = 0; i < kCalibDim; ++i) ref.sigma_ref(i) = testing::uniform(rng, 0.1, 10.0);
  const Mat26x26 N = normalize_covariance(S, ref);
  for (int i = 0; i < kCalibDim; ++i)
    for (int j = 0; j < kCalibDim; ++j)
      EXPECT_NEAR(N(i, j), S(i, j) / (ref.sigma_ref(i) * ref.sigma_ref(j)), 1e-12 * std::abs(N(i, j)) + 1e-300);
  ref.sigma_ref(3) = 0.0;
  EXPECT_THROW(normalize_covariance(S, ref), std::invalid_argument);
}

TEST(Score, IdentityAndDiagonalExamples) {
  const SegmentScore id = score(Mat26x26::Identity());
  EXPECT_NEAR(id.a_opt, 26.0, 1e-12);
  EXPECT_NEAR(id.d_opt, 1.0, 1e-12);
  EXPECT_NEAR(id.e_opt, 1.0, 1e-12);
  EXPECT_FALSE(id.rank_deficient);
  const double two_pi_e = 2.0 * std::numbers::pi * std::numbers::e;
  EXPECT_NEAR(id.entropy, 13.0 * std::log(two_pi_e), 1e-12);

  Mat26x26 D = Mat26x26::Identity();
  D(0, 0) = 2.0;
  const SegmentScore d = score(D);
  EXPECT_NEAR(d.a_opt, 27.0, 1e-12);
  EXPECT_NEAR(d.d_opt, 2.0, 1e-12);
  EXPECT_NEAR(d.e_opt, 2.0, 1e-12);
}

TEST(Score, EntropyMatchesIndependentDeterminant) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Mat26x26 A;
    for (int i = 0; i < kCalibDim; ++i)
      for (int j = 0; j < kCalibDim; ++j) A(i, j) = testing::uniform(rng, -1.0, 1.0);
    const Mat26x26 S = A * A.transpose() / 26.0 + 0.05 * Mat26x26::Identity();
    const double det = S.fullPivLu().determinant();
    const SegmentScore sc = score(S);
    const double expected = 0.5 * std::log(std::pow(2.0 * std::numbers::pi * std::numbers::e, 26) * det);
    EXPECT_NEAR(sc.entropy, expected, 1e-9);
    EXPECT_NEAR(sc.d_opt, det, 1e-9 * det);
  }
}

TEST(Score, RejectsInvalidCovariances) {
  Mat26x26 S = Mat26x26::Identity();
  S(0, 1) = 0.5;
  EXPECT_THROW(score(S), std::invalid_argument);
  S = Mat26x26::Identity();
  S(5, 5) = -1.0;
  EXPECT_THROW(score(S), std::invalid_argument);
  S(5, 5) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(score(S), std::invalid_argument);
}

TEST(Score, RankingByTraceSurvivesUniformScaling) {
  std::mt19937_64 rng(12);
  std::vector<Mat26x26> covs;
  for (int i = 0; i < 8; ++i) {
    Mat26x26 A = Mat26x26::Random();
    covs.push_back(A * A.transpose() * testing::uniform(rng, 0.5, 3.0));
  }
  auto ranking = [&](double c) {
    std::vector<int> idx(covs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return score(c * covs[a]).a_opt < score(c * covs[b]).a_opt; });
    return idx;
  };
  EXPECT_EQ(ranking(1.0), ranking(1e-3));
  EXPECT_EQ(ranking(1.0), ranking(250.0));
}

TEST(MetricKind, ParseAndName) {
  EXPECT_EQ(parse_metric("a"), MetricKind::kA);
  EXPECT_EQ(parse_metric("D"), MetricKind::kD);
  EXPECT_EQ(metric_name(MetricKind::kE), "e");
  EXPECT_THROW(parse_metric("x"), std::invalid_argument);
  SegmentScore s = score(Mat26x26::Identity() * 2.0);
  EXPECT_EQ(metric_value(s, MetricKind::kA), s.a_opt);
  EXPECT_EQ(metric_value(s, MetricKind::kD), s.d_opt);
  EXPECT_EQ(metric_value(s, MetricKind::kE), s.e_opt);
}

TEST(ReferenceSigmas, MedianOfStandardDeviations) {
  EXPECT_THROW(reference_sigmas({}), std::invalid_argument);
  Mat26x26 A = Mat26x26::Identity() * 4.0;
  EXPECT_LT((reference_sigmas({A}).sigma_ref - Vec26::Constant(2.0)).norm(), 1e-15);
  EXPECT_LT((reference_sigmas({A, A}).sigma_ref - Vec26::Constant(2.0)).norm(), 1e-15);
  EXPECT_LT((reference_sigmas({A, 9.0 * A / 4.0, 16.0 * A / 4.0}).sigma_ref - Vec26::Constant(3.0)).norm(), 1e-15);
}

TEST(ReferenceSigmas, WithinEnvelopeOfSimulatedCorpus) {
  const auto& s = testing::noisy_session(8.0);
  std::vector<Mat26x26> covs;
  for (const auto& seg : segment_stream(s.session_data(), 20)) {
    const auto mc = segment_marginal_covariance(seg, nominal_calibration(), s.config.noise);
    ASSERT_FALSE(mc.rank_deficient);
    covs.push_back(mc.matrix);
  }
  const auto ref = reference_sigmas(covs);
  for (int i = 0; i < kCalibDim; ++i) {
    double lo = INFINITY;
    double hi = 0.0;
    for (const auto& c : covs) {
      lo = std::min(lo, std::sqrt(c(i, i)));
      hi = std::max(hi, std::sqrt(c(i, i)));
    }
    EXPECT_GE(ref.sigma_ref(i), lo);
    EXPECT_LE(ref.sigma_ref(i), hi);
  }
}

// First 4 s segment of a trajectory with the given rotation amplitude, or
// no motion at all.
double segment_metric(double rotation_amplitude, MetricKind kind, const MetricNormalization& ref) {
  ScenarioConfig cfg = preset_config("arvr");
  cfg.duration = 4.0;
  cfg.add_noise = false;
  cfg.trajectory.translation.clear();
  cfg.trajectory.rotation.clear();
  if (rotation_amplitude > 0.0) {
    cfg.trajectory.rotation = {{0, rotation_amplitude, 0.4, 0.0}, {1, rotation_amplitude, 0.3, 1.0},
                               {2, rotation_amplitude, 0.25, 2.0}};
    cfg.trajectory.translation = {{0, 0.15, 0.3, 0.0}, {1, 0.1, 0.2, 1.0}, {2, 0.1, 0.35, 2.0}};
  }
  if (rotation_amplitude == 0.0) cfg.min_parallax = 0.0;
  const auto sim = simulate(cfg);
  const auto segs = segment_stream(sim.truth_session_data(), 40);
  const auto mc = segment_marginal_covariance(segs[0], sim.calibration, cfg.noise);
  return metric_value(score(mc, ref), kind);
}

TEST(Score, StillSegmentsRankWorseThanTurningSegments) {
  for (MetricKind kind : {MetricKind::kA, MetricKind::kD, MetricKind::kE}) {
    EXPECT_GT(segment_metric(0.0, kind, {}), segment_metric(0.6, kind, {})) << metric_name(kind);
  }
}

}  // namespace
}  // namespace infocalib
