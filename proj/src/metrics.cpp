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

#include "infocalib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "problem_internal.hpp"

namespace infocalib {

namespace {

using Eigen::MatrixXd;

using RowBlock = WhitenedBlock;

// Elimination variables: landmarks, then pose (rotation, position) and motion
// (velocity, biases) of each keyframe, then the calibration.
class VariableLayout {
 public:
  explicit VariableLayout(const CalibrationProblem& p) : L_(p.num_landmarks()) {
    const int K = p.num_keyframes();
    size_.assign(L_ + 2 * K + 1, 0);
    for (int m = 0; m < L_; ++m) size_[m] = 3;
    for (int k = 0; k < K; ++k) {
      switch (p.gauge[k]) {
        case KeyframeGauge::kFree:
          size_[pose(k)] = 6;
          size_[motion(k)] = 9;
          break;
        case KeyframeGauge::kAnchor:
          size_[pose(k)] = 2;
          size_[motion(k)] = 9;
          break;
        case KeyframeGauge::kFixed:
          break;
      }
    }
    size_.back() = p.calibration_constant ? 0 : kCalibDim;
  }

  int landmark(int m) const { return m; }
  int pose(int k) const { return L_ + 2 * k; }
  int motion(int k) const { return L_ + 2 * k + 1; }
  int calibration() const { return static_cast<int>(size_.size()) - 1; }
  int size(int v) const { return size_[v]; }
  int count() const { return static_cast<int>(size_.size()); }

 private:
  int L_;
  std::vector<int> size_;
};

// Maps a keyframe's 15 tangent columns to its pose and motion variables.
struct KeyframeColumns {
  Eigen::Matrix<double, 6, Eigen::Dynamic> pose;  // 6 x size(pose)
  bool has_motion = true;
};

KeyframeColumns keyframe_columns(const CalibrationProblem& p, int k) {
  KeyframeColumns c;
  switch (p.gauge[k]) {
    case KeyframeGauge::kFree:
      c.pose = Eigen::Matrix<double, 6, 6>::Identity();
      break;
    case KeyframeGauge::kAnchor: {
      const Mat3 B = anchor_rotation_basis(p.keyframes[k].q_GI);
      c.pose = Eigen::Matrix<double, 6, 2>::Zero();
      c.pose.topRows<3>() = B.leftCols<2>();
      break;
    }
    case KeyframeGauge::kFixed:
      c.pose.resize(6, 0);
      c.has_motion = false;
      break;
  }
  return c;
}

// Assembles a block from per-variable column groups, dropping empty ones.
RowBlock make_block(const VariableLayout& layout, std::vector<std::pair<int, MatrixXd>> parts) {
  std::sort(parts.begin(), parts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  RowBlock b;
  int rows = 0;
  int cols = 0;
  for (const auto& [v, M] : parts) {
    if (layout.size(v) == 0) continue;
    rows = static_cast<int>(M.rows());
    if (!b.variables.empty() && b.variables.back() == v) continue;
    b.variables.push_back(v);
    cols += layout.size(v);
  }
  b.A = MatrixXd::Zero(rows, cols);
  int c = 0;
  for (size_t i = 0; i < b.variables.size(); ++i) {
    for (const auto& [v, M] : parts) {
      if (v == b.variables[i]) b.A.middleCols(c, layout.size(v)) += M;
    }
    c += layout.size(b.variables[i]);
  }
  return b;
}

}  // namespace

void MetricNormalization::validate() const {
  if (!(sigma_ref.array() > 0.0).all() || !sigma_ref.allFinite()) {
    throw std::invalid_argument("metric normalization: sigma_ref entries must be positive");
  }
}

MetricKind parse_metric(std::string_view name) {
  if (name == "a" || name == "A") return MetricKind::kA;
  if (name == "d" || name == "D") return MetricKind::kD;
  if (name == "e" || name == "E") return MetricKind::kE;
  throw std::invalid_argument("unknown metric: " + std::string(name));
}

std::string_view metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kA:
      return "a";
    case MetricKind::kD:
      return "d";
    case MetricKind::kE:
      return "e";
  }
  return "?";
}

MarginalCovariance marginal_covariance(const CalibrationProblem& p) {
  p.validate();
  const VariableLayout layout(p);
  const Linearization lin = linearize(p, true);
  std::vector<WhitenedBlock> blocks;
  const int vc = layout.calibration();
  std::vector<KeyframeColumns> kcols(p.num_keyframes());
  for (int k = 0; k < p.num_keyframes(); ++k) kcols[k] = keyframe_columns(p, k);

  // Camera rows grouped by landmark.
  std::vector<std::vector<int>> by_landmark(p.num_landmarks());
  for (size_t i = 0; i < lin.camera.size(); ++i) {
    if (lin.camera[i].valid) by_landmark[p.camera_factors[i].landmark].push_back(static_cast<int>(i));
  }
  for (int m = 0; m < p.num_landmarks(); ++m) {
    const auto& idx = by_landmark[m];
    if (idx.empty()) continue;
    const int rows = 2 * static_cast<int>(idx.size());
    std::vector<std::pair<int, MatrixXd>> parts;
    MatrixXd Jl = MatrixXd::Zero(rows, 3);
    MatrixXd Jc = MatrixXd::Zero(rows, kCalibDim);
    for (size_t r = 0; r < idx.size(); ++r) {
      const CameraFactor& f = p.camera_factors[idx[r]];
      const CameraLinearization& l = lin.camera[idx[r]];
      const double s = 1.0 / f.sigma;
      Jl.middleRows<2>(2 * r) = s * l.d_landmark;
      Jc.block(2 * r, 0, 2, 11) = s * l.d_calib;
      MatrixXd Jp = MatrixXd::Zero(rows, kcols[f.keyframe].pose.cols());
      Jp.middleRows<2>(2 * r) = s * l.d_pose * kcols[f.keyframe].pose;
      parts.emplace_back(layout.pose(f.keyframe), std::move(Jp));
    }
    parts.emplace_back(layout.landmark(m), std::move(Jl));
    parts.emplace_back(vc, std::move(Jc));
    RowBlock b = make_block(layout, std::move(parts));
    if (!b.variables.empty()) blocks.push_back(std::move(b));
  }

  for (size_t i = 0; i < lin.inertial.size(); ++i) {
    const InertialFactor& f = p.inertial_factors[i];
    const InertialLinearization& l = lin.inertial[i];
    const Mat15& U = f.sqrt_weight;
    std::vector<std::pair<int, MatrixXd>> parts;
    for (const auto& [k, J] : {std::pair<int, const Mat15*>{f.k0, &l.d_k0}, {f.k1, &l.d_k1}}) {
      const Mat15 UJ = U * *J;
      parts.emplace_back(layout.pose(k), UJ.leftCols<6>() * kcols[k].pose);
      if (kcols[k].has_motion) parts.emplace_back(layout.motion(k), UJ.rightCols<9>());
    }
    MatrixXd Jc = MatrixXd::Zero(15, kCalibDim);
    Jc.rightCols<kImuIntrinsicsDim>() = U * l.d_imu;
    parts.emplace_back(vc, std::move(Jc));
    RowBlock b = make_block(layout, std::move(parts));
    if (!b.variables.empty()) blocks.push_back(std::move(b));
  }

  for (const BiasBridgeFactor& f : p.bridge_factors) {
    const double sg = 1.0 / (p.noise.sigma_bg * std::sqrt(f.dt));
    const double sa = 1.0 / (p.noise.sigma_ba * std::sqrt(f.dt));
    Eigen::Matrix<double, 6, 9> E = Eigen::Matrix<double, 6, 9>::Zero();
    E.block<3, 3>(0, 3) = sg * Mat3::Identity();
    E.block<3, 3>(3, 6) = sa * Mat3::Identity();
    std::vector<std::pair<int, MatrixXd>> parts;
    if (kcols[f.k0].has_motion) parts.emplace_back(layout.motion(f.k0), -E);
    if (kcols[f.k1].has_motion) parts.emplace_back(layout.motion(f.k1), E);
    RowBlock b = make_block(layout, std::move(parts));
    if (!b.variables.empty()) blocks.push_back(std::move(b));
  }

  std::vector<int> sizes(layout.count());
  for (int v = 0; v < layout.count(); ++v) sizes[v] = layout.size(v);
  return marginal_covariance(sizes, std::move(blocks));
}

MarginalCovariance marginal_covariance(const std::vector<int>& sizes, std::vector<WhitenedBlock> input) {
  const int count = static_cast<int>(sizes.size());
  if (count == 0 || sizes.back() != kCalibDim) {
    throw std::invalid_argument("marginal_covariance: the last variable must be the calibration");
  }
  const int vc = count - 1;
  std::vector<std::vector<RowBlock>> pending(count);
  for (WhitenedBlock& b : input) {
    int cols = 0;
    for (size_t i = 0; i < b.variables.size(); ++i) {
      const int v = b.variables[i];
      if (v < 0 || v >= count || (i > 0 && v <= b.variables[i - 1])) {
        throw std::invalid_argument("marginal_covariance: block variables must be ascending and valid");
      }
      cols += sizes[v];
    }
    if (cols != b.A.cols()) throw std::invalid_argument("marginal_covariance: block width mismatch");
    if (!b.variables.empty()) pending[b.variables.front()].push_back(std::move(b));
  }

  MarginalCovariance out;
  for (int v = 0; v < count; ++v) {
    auto& blocks = pending[v];
    if (blocks.empty() || sizes.at(v) == 0) continue;
    std::vector<int> vars;
    int rows = 0;
    for (const RowBlock& b : blocks) {
      vars.insert(vars.end(), b.variables.begin(), b.variables.end());
      rows += static_cast<int>(b.A.rows());
    }
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    std::map<int, int> offset;
    int cols = 0;
    for (int u : vars) {
      offset[u] = cols;
      cols += sizes.at(u);
    }
    MatrixXd M = MatrixXd::Zero(rows, cols);
    int r = 0;
    for (const RowBlock& b : blocks) {
      int c = 0;
      for (int u : b.variables) {
        M.block(r, offset[u], b.A.rows(), sizes.at(u)) = b.A.middleCols(c, sizes.at(u));
        c += sizes.at(u);
      }
      r += static_cast<int>(b.A.rows());
    }
    blocks.clear();
    blocks.shrink_to_fit();

    const int nv = sizes.at(v);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(M.leftCols(nv));
    const double max_pivot = qr.maxPivot();
    int rank = 0;
    if (max_pivot > 0.0) {
      const auto R = qr.matrixQR();
      const int diag = static_cast<int>(std::min<Eigen::Index>(R.rows(), R.cols()));
      while (rank < diag && std::abs(R(rank, rank)) > kRankTolerance * max_pivot) ++rank;
    }

    if (v == vc) {
      out.rank = rank;
      if (rank < kCalibDim) break;
      const Mat26x26 R = qr.matrixQR().topRows(kCalibDim).triangularView<Eigen::Upper>();
      const Mat26x26 Rinv = R.triangularView<Eigen::Upper>().solve(Mat26x26::Identity());
      const Mat26x26 P = qr.colsPermutation();
      out.matrix = P * (Rinv * Rinv.transpose()) * P.transpose();
      out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
      return out;
    }

    if (cols == nv) continue;
    MatrixXd rest = M.rightCols(cols - nv);
    rest.applyOnTheLeft(qr.householderQ().adjoint());
    MatrixXd left = rest.bottomRows(rows - rank);
    if (left.rows() == 0) continue;
    if (left.rows() > left.cols()) {
      Eigen::HouseholderQR<MatrixXd> cqr(left);
      left = cqr.matrixQR().topRows(left.cols()).triangularView<Eigen::Upper>();
    }
    RowBlock passed;
    passed.variables.assign(vars.begin() + 1, vars.end());
    passed.A = std::move(left);
    pending[passed.variables.front()].push_back(std::move(passed));
  }
  out.rank_deficient = true;
  out.matrix.setConstant(std::numeric_limits<double>::infinity());
  return out;
}

MarginalCovariance segment_marginal_covariance(const MotionSegment& segment,
                                               const CalibrationState& calibration,
                                               const NoiseModel& noise) {
  return marginal_covariance(build_segment_problem({segment}, calibration, noise));
}

Mat26x26 normalize_covariance(const Mat26x26& sigma, const MetricNormalization& ref) {
  ref.validate();
  const Vec26 inv = ref.sigma_ref.cwiseInverse();
  return inv.asDiagonal() * sigma * inv.asDiagonal();
}

SegmentScore score(const Mat26x26& s) {
  if (!s.allFinite()) throw std::invalid_argument("score: covariance is not finite");
  const double scale = std::max(s.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument("score: covariance is not symmetric");
  }
  const Mat26x26 sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Mat26x26> eig(sym, Eigen::EigenvaluesOnly);
  const double norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (eig.eigenvalues().minCoeff() < -1e-9 * norm) {
    throw std::invalid_argument("score: covariance is not positive semi-definite");
  }
  double logdet;
  Eigen::LLT<Mat26x26> llt(sym);
  if (llt.info() == Eigen::Success) {
    logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  } else {
    logdet = eig.eigenvalues().array().max(0.0).log().sum();
  }
  SegmentScore out;
  out.a_opt = sym.trace();
  out.d_opt = std::exp(logdet);
  out.e_opt = eig.eigenvalues().maxCoeff();
  out.entropy = 0.5 * (kCalibDim * std::log(2.0 * std::numbers::pi * std::numbers::e) + logdet);
  out.rank_deficient = false;
  return out;
}

SegmentScore score(const MarginalCovariance& sigma, const MetricNormalization& ref) {
  if (sigma.rank_deficient) return {};
  return score(normalize_covariance(sigma.matrix, ref));
}

double metric_value(const SegmentScore& s, MetricKind kind) {
  if (s.rank_deficient) return std::numeric_limits<double>::infinity();
  switch (kind) {
    case MetricKind::kA:
      return s.a_opt;
    case MetricKind::kD:
      return s.d_opt;
    case MetricKind::kE:
      return s.e_opt;
  }
  return std::numeric_limits<double>::infinity();
}

MetricNormalization reference_sigmas(const std::vector<Mat26x26>& covariances) {
  if (covariances.empty()) throw std::invalid_argument("reference_sigmas: no covariances");
  MetricNormalization out;
  std::vector<double> v(covariances.size());
  for (int i = 0; i < kCalibDim; ++i) {
    for (size_t j = 0; j < covariances.size(); ++j) v[j] = std::sqrt(std::max(covariances[j](i, i), 0.0));
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    out.sigma_ref(i) = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  out.validate();
  return out;
}

}  // namespace infocalib
