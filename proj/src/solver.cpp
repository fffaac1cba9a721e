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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/CholmodSupport>
#include <Eigen/LU>

#include "infocalib/problem.hpp"
#include "problem_internal.hpp"

namespace infocalib {

namespace {

using Mat15x26 = Eigen::Matrix<double, 15, kCalibDim>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using Mat11x3 = Eigen::Matrix<double, 11, 3>;
using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

constexpr double kDampingMin = 1e-6;
constexpr double kDampingMax = 1e32;
constexpr double kLambdaMax = 1e16;
constexpr double kAbsoluteCostTol = 1e-12;

// Keyframe-block sparsity of the landmark-reduced normal equations.
struct BlockPattern {
  int K = 0;
  std::vector<std::vector<int>> lower;  // per block column j: sorted i <= j, ending with j
  std::vector<int> slot_start;
  int num_slots = 0;

  int slot(int i, int j) const {
    const auto& v = lower[j];
    return slot_start[j] + static_cast<int>(std::lower_bound(v.begin(), v.end(), i) - v.begin());
  }
};

struct LandmarkObservation {
  int keyframe;
  Mat63 W;  // pose rows x landmark columns of the Hessian
};

struct NormalEquations {
  std::vector<Mat15> blocks;
  std::vector<Mat15x26> kc;
  Mat26x26 cc;
  Eigen::VectorXd g;  // keyframes then calibration
  std::vector<Mat3> ll;
  std::vector<Vec3> gl;
  std::vector<Mat11x3> cl;
  std::vector<std::vector<LandmarkObservation>> kl;
};

BlockPattern make_pattern(const CalibrationProblem& p) {
  const int K = p.num_keyframes();
  std::vector<std::vector<int>> lower(K);
  for (int k = 0; k < K; ++k) lower[k].push_back(k);
  for (const InertialFactor& f : p.inertial_factors) lower[f.k1].push_back(f.k0);
  for (const BiasBridgeFactor& f : p.bridge_factors) lower[f.k1].push_back(f.k0);
  std::vector<std::vector<int>> seen_by(p.num_landmarks());
  for (const CameraFactor& f : p.camera_factors) seen_by[f.landmark].push_back(f.keyframe);
  for (auto& ks : seen_by) {
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    for (size_t a = 0; a < ks.size(); ++a) {
      for (size_t b = a + 1; b < ks.size(); ++b) lower[ks[b]].push_back(ks[a]);
    }
  }
  BlockPattern pat;
  pat.K = K;
  pat.lower = std::move(lower);
  for (auto& v : pat.lower) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    pat.slot_start.push_back(pat.num_slots);
    pat.num_slots += static_cast<int>(v.size());
  }
  return pat;
}

// Upper-triangular CSC structure of the (15K + 26) reduced system.
SpMat make_sparse_structure(const BlockPattern& pat) {
  const int K = pat.K;
  const int n = kKeyframeDim * K + kCalibDim;
  SpMat A(n, n);
  std::vector<int> outer(n + 1, 0);
  for (int j = 0; j < K; ++j) {
    const int len = static_cast<int>(pat.lower[j].size());
    for (int c = 0; c < kKeyframeDim; ++c) {
      outer[kKeyframeDim * j + c + 1] = kKeyframeDim * (len - 1) + c + 1;
    }
  }
  for (int c = 0; c < kCalibDim; ++c) outer[kKeyframeDim * K + c + 1] = kKeyframeDim * K + c + 1;
  for (int i = 0; i < n; ++i) outer[i + 1] += outer[i];
  A.resizeNonZeros(outer[n]);
  std::copy(outer.begin(), outer.end(), A.outerIndexPtr());
  int* inner = A.innerIndexPtr();
  for (int j = 0; j < K; ++j) {
    const auto& list = pat.lower[j];
    for (int c = 0; c < kKeyframeDim; ++c) {
      int pos = outer[kKeyframeDim * j + c];
      for (size_t q = 0; q + 1 < list.size(); ++q) {
        for (int r = 0; r < kKeyframeDim; ++r) inner[pos++] = kKeyframeDim * list[q] + r;
      }
      for (int r = 0; r <= c; ++r) inner[pos++] = kKeyframeDim * j + r;
    }
  }
  for (int c = 0; c < kCalibDim; ++c) {
    int pos = outer[kKeyframeDim * K + c];
    for (int r = 0; r < kKeyframeDim * K + c + 1; ++r) inner[pos++] = r;
  }
  std::fill(A.valuePtr(), A.valuePtr() + outer[n], 0.0);
  return A;
}

void write_values(const BlockPattern& pat, const std::vector<Mat15>& blocks,
                  const std::vector<Mat15x26>& kc, const Mat26x26& cc, SpMat& A) {
  const int K = pat.K;
  const int* outer = A.outerIndexPtr();
  double* val = A.valuePtr();
  for (int j = 0; j < K; ++j) {
    const int len = static_cast<int>(pat.lower[j].size());
    for (int c = 0; c < kKeyframeDim; ++c) {
      double* out = val + outer[kKeyframeDim * j + c];
      for (int q = 0; q + 1 < len; ++q) {
        const Mat15& B = blocks[pat.slot_start[j] + q];
        for (int r = 0; r < kKeyframeDim; ++r) *out++ = B(r, c);
      }
      const Mat15& D = blocks[pat.slot_start[j] + len - 1];
      for (int r = 0; r <= c; ++r) *out++ = D(r, c);
    }
  }
  for (int c = 0; c < kCalibDim; ++c) {
    double* out = val + outer[kKeyframeDim * K + c];
    for (int k = 0; k < K; ++k) {
      for (int r = 0; r < kKeyframeDim; ++r) *out++ = kc[k](r, c);
    }
    for (int r = 0; r <= c; ++r) *out++ = cc(r, c);
  }
}

NormalEquations assemble(const CalibrationProblem& p, const BlockPattern& pat,
                         const Linearization& lin, const std::vector<Mat15>& col_transform) {
  const int K = p.num_keyframes();
  const int L = p.num_landmarks();
  NormalEquations ne;
  ne.blocks.assign(pat.num_slots, Mat15::Zero());
  ne.kc.assign(K, Mat15x26::Zero());
  ne.cc.setZero();
  ne.g = Eigen::VectorXd::Zero(kKeyframeDim * K + kCalibDim);
  ne.ll.assign(L, Mat3::Zero());
  ne.gl.assign(L, Vec3::Zero());
  ne.cl.assign(L, Mat11x3::Zero());
  ne.kl.assign(L, {});
  const double calib_mask = p.calibration_constant ? 0.0 : 1.0;
  const int gc = kKeyframeDim * K;

  for (size_t i = 0; i < lin.camera.size(); ++i) {
    const CameraLinearization& l = lin.camera[i];
    if (!l.valid) continue;
    const CameraFactor& f = p.camera_factors[i];
    const double w = huber_weight(p, l, f.sigma) / (f.sigma * f.sigma);
    const Mat26 Jp = l.d_pose * col_transform[f.keyframe].topLeftCorner<6, 6>();
    const Eigen::Matrix<double, 2, 11> Jc = calib_mask * l.d_calib;
    const Mat23& Jl = l.d_landmark;
    const int k = f.keyframe;
    const int m = f.landmark;
    ne.blocks[pat.slot(k, k)].topLeftCorner<6, 6>() += w * Jp.transpose() * Jp;
    ne.g.segment<6>(kKeyframeDim * k) += w * Jp.transpose() * l.residual;
    ne.kc[k].topLeftCorner<6, 11>() += w * Jp.transpose() * Jc;
    ne.cc.topLeftCorner<11, 11>() += w * Jc.transpose() * Jc;
    ne.g.segment<11>(gc) += w * Jc.transpose() * l.residual;
    ne.ll[m] += w * Jl.transpose() * Jl;
    ne.gl[m] += w * Jl.transpose() * l.residual;
    ne.cl[m] += w * Jc.transpose() * Jl;
    const Mat63 W = w * Jp.transpose() * Jl;
    auto& obs = ne.kl[m];
    if (!obs.empty() && obs.back().keyframe == k) {
      obs.back().W += W;
    } else {
      obs.push_back({k, W});
    }
  }

  for (size_t i = 0; i < lin.inertial.size(); ++i) {
    const InertialFactor& f = p.inertial_factors[i];
    const InertialLinearization& l = lin.inertial[i];
    const Mat15 J0 = l.d_k0 * col_transform[f.k0];
    const Mat15 J1 = l.d_k1 * col_transform[f.k1];
    const Mat15 Ji = calib_mask * l.d_imu;
    const Mat15& W = f.weight;
    const Mat15 WJ0 = W * J0;
    const Mat15 WJ1 = W * J1;
    const Mat15 WJi = W * Ji;
    const Vec15 Wr = W * l.residual;
    ne.blocks[pat.slot(f.k0, f.k0)] += J0.transpose() * WJ0;
    ne.blocks[pat.slot(f.k1, f.k1)] += J1.transpose() * WJ1;
    ne.blocks[pat.slot(f.k0, f.k1)] += J0.transpose() * WJ1;
    ne.kc[f.k0].rightCols<15>() += J0.transpose() * WJi;
    ne.kc[f.k1].rightCols<15>() += J1.transpose() * WJi;
    ne.cc.bottomRightCorner<15, 15>() += Ji.transpose() * WJi;
    ne.g.segment<15>(kKeyframeDim * f.k0) += J0.transpose() * Wr;
    ne.g.segment<15>(kKeyframeDim * f.k1) += J1.transpose() * Wr;
    ne.g.segment<15>(gc + kCalImu) += Ji.transpose() * Wr;
  }

  for (size_t i = 0; i < lin.bridge.size(); ++i) {
    const BiasBridgeFactor& f = p.bridge_factors[i];
    Vec6 w;
    w.head<3>().setConstant(1.0 / (p.noise.sigma_bg * p.noise.sigma_bg * f.dt));
    w.tail<3>().setConstant(1.0 / (p.noise.sigma_ba * p.noise.sigma_ba * f.dt));
    Eigen::Matrix<double, 6, 15> E = Eigen::Matrix<double, 6, 15>::Zero();
    E.rightCols<6>() = Mat6::Identity();
    const Eigen::Matrix<double, 6, 15> J0 = -E * col_transform[f.k0];
    const Eigen::Matrix<double, 6, 15> J1 = E * col_transform[f.k1];
    const Vec6 Wr = w.cwiseProduct(lin.bridge[i]);
    ne.blocks[pat.slot(f.k0, f.k0)] += J0.transpose() * w.asDiagonal() * J0;
    ne.blocks[pat.slot(f.k1, f.k1)] += J1.transpose() * w.asDiagonal() * J1;
    ne.blocks[pat.slot(f.k0, f.k1)] += J0.transpose() * w.asDiagonal() * J1;
    ne.g.segment<15>(kKeyframeDim * f.k0) += J0.transpose() * Wr;
    ne.g.segment<15>(kKeyframeDim * f.k1) += J1.transpose() * Wr;
  }
  return ne;
}

double clamp_damping(double d) { return std::clamp(d, kDampingMin, kDampingMax); }

struct Step {
  bool ok = false;
  Eigen::VectorXd dx;  // keyframes (solver coordinates) then calibration
  std::vector<Vec3> dl;
  double predicted = 0.0;
};

class SchurSolver {
 public:
  SchurSolver(const CalibrationProblem& p, const BlockPattern& pat)
      : p_(p), pat_(pat), A_(make_sparse_structure(pat)) {
    solver_.cholmod().print = 0;  // failures surface through info()
    const int K = p.num_keyframes();
    pinned_.assign(kKeyframeDim * K + kCalibDim, false);
    for (int k = 0; k < K; ++k) {
      if (p.gauge[k] == KeyframeGauge::kFixed) {
        for (int c = 0; c < kKeyframeDim; ++c) pinned_[kKeyframeDim * k + c] = true;
      } else if (p.gauge[k] == KeyframeGauge::kAnchor) {
        pinned_[kKeyframeDim * k + kKfRot + 2] = true;
        for (int c = 0; c < 3; ++c) pinned_[kKeyframeDim * k + kKfPos + c] = true;
      }
    }
    if (p.calibration_constant) {
      for (int c = 0; c < kCalibDim; ++c) pinned_[kKeyframeDim * K + c] = true;
    }
    solver_.analyzePattern(A_);
  }

  Step solve(const NormalEquations& ne, double lambda) {
    const int K = p_.num_keyframes();
    const int L = p_.num_landmarks();
    const int gc = kKeyframeDim * K;
    work_blocks_ = ne.blocks;
    work_kc_ = ne.kc;
    Mat26x26 cc = ne.cc;
    Eigen::VectorXd rhs = -ne.g;
    Eigen::VectorXd damp(gc + kCalibDim);

    for (int k = 0; k < K; ++k) {
      Mat15& D = work_blocks_[pat_.slot(k, k)];
      for (int c = 0; c < kKeyframeDim; ++c) {
        damp(kKeyframeDim * k + c) = clamp_damping(ne.blocks[pat_.slot(k, k)](c, c));
        D(c, c) += lambda * damp(kKeyframeDim * k + c);
      }
    }
    for (int c = 0; c < kCalibDim; ++c) {
      damp(gc + c) = clamp_damping(ne.cc(c, c));
      cc(c, c) += lambda * damp(gc + c);
    }

    minv_.resize(L);
    std::vector<Vec3> ldamp(L);
    for (int m = 0; m < L; ++m) {
      Mat3 A = ne.ll[m];
      for (int c = 0; c < 3; ++c) {
        ldamp[m](c) = clamp_damping(ne.ll[m](c, c));
        A(c, c) += lambda * ldamp[m](c);
      }
      minv_[m] = A.inverse();
      if (!minv_[m].allFinite()) return {};
      const auto& obs = ne.kl[m];
      const Mat11x3 CM = ne.cl[m] * minv_[m];
      const Vec3 Mg = minv_[m] * ne.gl[m];
      for (size_t a = 0; a < obs.size(); ++a) {
        const Mat63 WM = obs[a].W * minv_[m];
        for (size_t b = a; b < obs.size(); ++b) {
          work_blocks_[pat_.slot(obs[a].keyframe, obs[b].keyframe)].topLeftCorner<6, 6>() -=
              WM * obs[b].W.transpose();
        }
        work_kc_[obs[a].keyframe].topLeftCorner<6, 11>() -= WM * ne.cl[m].transpose();
        rhs.segment<6>(kKeyframeDim * obs[a].keyframe) += obs[a].W * Mg;
      }
      cc.topLeftCorner<11, 11>() -= CM * ne.cl[m].transpose();
      rhs.segment<11>(gc) += ne.cl[m] * Mg;
    }

    // Pinned coordinates have zero rows and columns; give them a unit pivot.
    for (int k = 0; k < K; ++k) {
      Mat15& D = work_blocks_[pat_.slot(k, k)];
      for (int c = 0; c < kKeyframeDim; ++c) {
        if (pinned_[kKeyframeDim * k + c]) {
          D(c, c) = 1.0;
          rhs(kKeyframeDim * k + c) = 0.0;
        }
      }
    }
    for (int c = 0; c < kCalibDim; ++c) {
      if (pinned_[gc + c]) {
        cc(c, c) = 1.0;
        rhs(gc + c) = 0.0;
      }
    }

    write_values(pat_, work_blocks_, work_kc_, cc, A_);
    solver_.factorize(A_);
    if (solver_.info() != Eigen::Success) return {};
    Step step;
    step.dx = solver_.solve(rhs);
    if (!step.dx.allFinite()) return {};
    for (int i = 0; i < gc + kCalibDim; ++i) {
      if (pinned_[i]) step.dx(i) = 0.0;
    }

    step.dl.resize(L);
    double predicted = 0.0;
    for (int m = 0; m < L; ++m) {
      Vec3 r = -ne.gl[m] - ne.cl[m].transpose() * step.dx.segment<11>(gc);
      for (const LandmarkObservation& o : ne.kl[m]) {
        r -= o.W.transpose() * step.dx.segment<6>(kKeyframeDim * o.keyframe);
      }
      step.dl[m] = minv_[m] * r;
      predicted += step.dl[m].dot(lambda * ldamp[m].cwiseProduct(step.dl[m]) - ne.gl[m]);
    }
    predicted += step.dx.dot(lambda * damp.cwiseProduct(step.dx) - ne.g);
    step.predicted = predicted;
    step.ok = true;
    return step;
  }

 private:
  const CalibrationProblem& p_;
  const BlockPattern& pat_;
  SpMat A_;
  Eigen::CholmodSupernodalLLT<SpMat, Eigen::Upper> solver_;
  std::vector<bool> pinned_;
  std::vector<Mat15> work_blocks_;
  std::vector<Mat15x26> work_kc_;
  std::vector<Mat3> minv_;
};

struct StateSnapshot {
  std::vector<KeyframeState> keyframes;
  std::vector<Landmark> landmarks;
  CalibrationState calibration;
};

}  // namespace

SolverReport solve(CalibrationProblem& p, const SolverOptions& opt) {
  p.validate();
  for (const KeyframeState& k : p.keyframes) {
    if (!k.p_GI.allFinite() || !k.v_GI.allFinite() || !k.q_GI.coeffs().allFinite() ||
        !k.b_g.allFinite() || !k.b_a.allFinite()) {
      throw SolverError("non-finite keyframe state");
    }
  }
  for (const Landmark& l : p.landmarks) {
    if (!l.l_G.allFinite()) throw SolverError("non-finite landmark position");
  }
  SolverReport report;
  CostBreakdown cost = evaluate_cost(p);
  double F = cost.total;
  report.initial_cost = F;
  report.skipped_camera_factors = cost.skipped_camera_factors;
  if (!std::isfinite(F)) throw SolverError("non-finite initial cost");

  const int K = p.num_keyframes();
  const int L = p.num_landmarks();
  const BlockPattern pat = make_pattern(p);
  SchurSolver schur(p, pat);

  std::vector<Mat15> col_transform(K);
  std::vector<Mat3> basis(K);
  const auto relinearize = [&]() {
    for (int k = 0; k < K; ++k) {
      col_transform[k] = keyframe_column_transform(p, k);
      basis[k] = anchor_rotation_basis(p.keyframes[k].q_GI);
    }
    return assemble(p, pat, linearize(p, true), col_transform);
  };
  NormalEquations ne = relinearize();

  double lambda = opt.lambda_init;
  double nu = 2.0;
  report.termination = "max_iters";
  while (report.iterations < opt.max_iters) {
    if (F <= kAbsoluteCostTol) {
      report.converged = true;
      report.termination = "cost below absolute tolerance";
      break;
    }
    Step step = schur.solve(ne, lambda);
    ++report.iterations;
    if (!step.ok) {
      lambda *= nu;
      nu *= 2.0;
      if (lambda > kLambdaMax) throw SolverError("normal equations could not be factorized");
      continue;
    }
    if (step.predicted <= std::max(opt.tol * F, kAbsoluteCostTol)) {
      report.converged = true;
      report.termination = "predicted decrease below tolerance";
      break;
    }

    // Map solver coordinates back to the problem's tangent layout.
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(num_columns(p));
    for (int k = 0; k < K; ++k) {
      Vec15 d = step.dx.segment<15>(kKeyframeDim * k);
      if (p.gauge[k] == KeyframeGauge::kAnchor) {
        d.segment<3>(kKfRot) = basis[k] * d.segment<3>(kKfRot);
      }
      delta.segment<15>(keyframe_column(k)) = d;
    }
    for (int m = 0; m < L; ++m) delta.segment<3>(landmark_column(p, m)) = step.dl[m];
    delta.segment<kCalibDim>(calibration_column(p)) = step.dx.tail<kCalibDim>();

    StateSnapshot saved{p.keyframes, p.landmarks, p.calibration};
    retract_problem(p, delta);
    double F_new = std::numeric_limits<double>::infinity();
    if (p.calibration.camera.valid() && p.calibration.imu.s_g.minCoeff() > 0.0 &&
        p.calibration.imu.s_a.minCoeff() > 0.0) {
      cost = evaluate_cost(p);
      F_new = cost.total;
    }
    const double rho = (F - F_new) / step.predicted;
    if (opt.verbose) {
      std::fprintf(stderr, "lm iter %d cost %.6e -> %.6e lambda %.2e rho %.3f\n", report.iterations,
                   F, F_new, lambda, rho);
    }
    if (std::isfinite(F_new) && F_new < F) {
      const double rel = (F - F_new) / F;
      F = F_new;
      report.skipped_camera_factors = cost.skipped_camera_factors;
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      if (rel < opt.tol) {
        report.converged = true;
        report.termination = "relative decrease below tolerance";
        break;
      }
      ne = relinearize();
    } else {
      p.keyframes = std::move(saved.keyframes);
      p.landmarks = std::move(saved.landmarks);
      p.calibration = saved.calibration;
      lambda *= nu;
      nu *= 2.0;
      if (lambda > kLambdaMax) {
        report.termination = "trust region collapsed";
        break;
      }
    }
  }
  report.final_cost = F;
  return report;
}

}  // namespace infocalib
