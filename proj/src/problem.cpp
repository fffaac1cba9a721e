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

#include "infocalib/problem.hpp"
#include "problem_internal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Cholesky>

#ifdef INFOCALIB_HAVE_OPENMP
#include <omp.h>
#endif

namespace infocalib {

namespace {

constexpr double kHuberScale = 2.0;  // in units of the pixel sigma

InertialFactor make_inertial_factor(int k0, int k1, std::vector<ImuSample> samples,
                                    const KeyframeState& x0, const ImuIntrinsics& imu,
                                    const NoiseModel& noise) {
  InertialFactor f;
  f.k0 = k0;
  f.k1 = k1;
  f.samples = std::move(samples);
  const PreintegratedImu pre = preintegrate(f.samples, imu, {x0.b_g, x0.b_a}, noise);
  f.weight = inertial_weight(pre);
  Eigen::LLT<Mat15> llt(f.weight);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("inertial factor weight is not positive definite");
  }
  f.sqrt_weight = llt.matrixU();
  return f;
}

void sort_camera_factors(std::vector<CameraFactor>& factors) {
  std::stable_sort(factors.begin(), factors.end(), [](const CameraFactor& a, const CameraFactor& b) {
    return a.keyframe != b.keyframe ? a.keyframe < b.keyframe : a.landmark < b.landmark;
  });
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

size_t count_shared(const std::vector<int>& a, const std::vector<int>& b) {
  size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

// Whitened squared norm -> (robust cost, IRLS weight).
std::pair<double, double> huber(double s) {
  const double k2 = kHuberScale * kHuberScale;
  if (s <= k2) return {s, 1.0};
  const double e = std::sqrt(s);
  return {2.0 * kHuberScale * e - k2, kHuberScale / e};
}

}  // namespace

void set_num_threads(int n) {
#ifdef INFOCALIB_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void CalibrationProblem::validate() const {
  const int K = num_keyframes();
  const int L = num_landmarks();
  if (K == 0) throw std::invalid_argument("problem has no keyframes");
  if (static_cast<int>(gauge.size()) != K || static_cast<int>(keyframe_keys.size()) != K) {
    throw std::invalid_argument("per-keyframe arrays do not match the keyframe count");
  }
  for (const CameraFactor& f : camera_factors) {
    if (f.keyframe < 0 || f.keyframe >= K || f.landmark < 0 || f.landmark >= L) {
      throw std::invalid_argument("camera factor references a missing keyframe or landmark");
    }
    if (!(f.sigma > 0.0)) throw std::invalid_argument("observation sigma must be positive");
  }
  for (const InertialFactor& f : inertial_factors) {
    if (f.k0 < 0 || f.k1 >= K || f.k0 >= f.k1) {
      throw std::invalid_argument("inertial factor references invalid keyframes");
    }
  }
  for (const BiasBridgeFactor& f : bridge_factors) {
    if (f.k0 < 0 || f.k1 >= K || f.k0 >= f.k1 || !(f.dt > 0.0)) {
      throw std::invalid_argument("bias bridge references invalid keyframes");
    }
  }
}

CalibrationProblem build_batch_problem(const std::vector<KeyframeState>& keyframes,
                                       const std::vector<Landmark>& landmarks,
                                       const std::vector<FeatureObservation>& observations,
                                       const std::vector<ImuSample>& imu_stream,
                                       const CalibrationState& calib_init,
                                       const NoiseModel& noise) {
  if (keyframes.empty()) throw std::invalid_argument("build_batch_problem: no keyframes");
  for (size_t k = 1; k < keyframes.size(); ++k) {
    if (!(keyframes[k].t > keyframes[k - 1].t)) {
      throw std::invalid_argument("build_batch_problem: keyframes not temporally ordered");
    }
  }
  calib_init.validate();
  noise.validate();
  CalibrationProblem p;
  const int K = static_cast<int>(keyframes.size());
  p.keyframes = keyframes;
  p.landmarks = landmarks;
  p.calibration = calib_init;
  p.noise = noise;
  p.gauge.assign(K, KeyframeGauge::kFree);
  p.gauge[0] = KeyframeGauge::kAnchor;
  for (int k = 0; k < K; ++k) p.keyframe_keys.push_back({0, k});

  std::unordered_map<int, int> landmark_index;
  for (int m = 0; m < static_cast<int>(landmarks.size()); ++m) {
    if (!landmark_index.emplace(landmarks[m].id, m).second) {
      throw std::invalid_argument("build_batch_problem: duplicate landmark id");
    }
  }
  for (const FeatureObservation& o : observations) {
    auto it = landmark_index.find(o.landmark_id);
    if (it == landmark_index.end() || o.keyframe_id < 0 || o.keyframe_id >= K) {
      throw std::invalid_argument("build_batch_problem: observation with dangling id");
    }
    p.camera_factors.push_back({o.keyframe_id, it->second, o.uv, o.sigma});
  }
  sort_camera_factors(p.camera_factors);

  for (int k = 0; k + 1 < K; ++k) {
    p.inertial_factors.push_back(make_inertial_factor(
        k, k + 1, samples_between(imu_stream, keyframes[k].t, keyframes[k + 1].t), keyframes[k],
        calib_init.imu, noise));
  }
  Partition part;
  part.keyframe_ranges.push_back({0, 0, K - 1});
  part.anchor = {0, 0};
  p.partitions.push_back(part);
  return p;
}

std::vector<Partition> partition_segments(const std::vector<MotionSegment>& segments,
                                          int max_shared) {
  const int n = static_cast<int>(segments.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const MotionSegment& sa = segments[a];
    const MotionSegment& sb = segments[b];
    if (sa.session_id != sb.session_id) return sa.session_id < sb.session_id;
    if (sa.first_keyframe != sb.first_keyframe) return sa.first_keyframe < sb.first_keyframe;
    return sa.id < sb.id;
  });
  std::vector<std::vector<int>> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = segments[order[i]].landmark_ids();

  // Positions in `order` are the union-find elements.
  UnionFind uf(n);
  for (int i = 0; i < n; ++i) {
    const MotionSegment& a = segments[order[i]];
    for (int j = i + 1; j < n; ++j) {
      const MotionSegment& b = segments[order[j]];
      if (a.session_id != b.session_id) break;
      if (b.first_keyframe == a.last_keyframe() + 1 || a.first_keyframe == b.last_keyframe() + 1 ||
          count_shared(ids[i], ids[j]) > static_cast<size_t>(max_shared)) {
        uf.unite(i, j);
      }
    }
  }

  std::map<int, Partition> by_root;
  for (int i = 0; i < n; ++i) {
    const MotionSegment& s = segments[order[i]];
    Partition& part = by_root[uf.find(i)];
    if (part.segment_ids.empty()) part.anchor = {s.session_id, s.first_keyframe};
    part.segment_ids.push_back(s.id);
    if (!part.keyframe_ranges.empty() && part.keyframe_ranges.back().session == s.session_id &&
        part.keyframe_ranges.back().last + 1 == s.first_keyframe) {
      part.keyframe_ranges.back().last = s.last_keyframe();
    } else {
      part.keyframe_ranges.push_back({s.session_id, s.first_keyframe, s.last_keyframe()});
    }
  }
  std::vector<Partition> out;
  for (auto& [root, part] : by_root) out.push_back(std::move(part));
  return out;
}

CalibrationProblem build_segment_problem(const std::vector<MotionSegment>& segments_in,
                                         const CalibrationState& calib_init,
                                         const NoiseModel& noise, int max_shared) {
  if (segments_in.empty()) throw std::invalid_argument("build_segment_problem: no segments");
  calib_init.validate();
  noise.validate();
  std::vector<const MotionSegment*> segs;
  for (const MotionSegment& s : segments_in) {
    if (s.keyframes.empty()) throw std::invalid_argument("build_segment_problem: empty segment");
    segs.push_back(&s);
  }
  std::sort(segs.begin(), segs.end(), [](const MotionSegment* a, const MotionSegment* b) {
    if (a->session_id != b->session_id) return a->session_id < b->session_id;
    return a->first_keyframe < b->first_keyframe;
  });
  for (size_t i = 1; i < segs.size(); ++i) {
    if (segs[i]->session_id == segs[i - 1]->session_id &&
        segs[i]->first_keyframe <= segs[i - 1]->last_keyframe()) {
      throw std::invalid_argument("build_segment_problem: overlapping segments");
    }
  }

  CalibrationProblem p;
  p.calibration = calib_init;
  p.noise = noise;
  std::map<KeyframeKey, int> keyframe_index;
  std::vector<int> segment_offset;
  for (const MotionSegment* s : segs) {
    segment_offset.push_back(p.num_keyframes());
    for (int i = 0; i < s->size(); ++i) {
      const KeyframeKey key{s->session_id, s->first_keyframe + i};
      keyframe_index[key] = p.num_keyframes();
      p.keyframes.push_back(s->keyframes[i]);
      p.keyframe_keys.push_back(key);
    }
  }

  // Landmarks are identified by (session, id); keep those seen at least twice.
  std::map<std::pair<int, int>, int> obs_count;
  std::map<std::pair<int, int>, const Landmark*> initial;
  for (const MotionSegment* s : segs) {
    for (const FeatureObservation& o : s->observations) ++obs_count[{s->session_id, o.landmark_id}];
    for (const Landmark& l : s->landmarks) initial.emplace(std::make_pair(s->session_id, l.id), &l);
  }
  std::map<std::pair<int, int>, int> landmark_index;
  for (const auto& [key, count] : obs_count) {
    if (count < 2) continue;
    auto it = initial.find(key);
    if (it == initial.end()) {
      throw std::invalid_argument("build_segment_problem: observation of unknown landmark");
    }
    landmark_index[key] = p.num_landmarks();
    p.landmarks.push_back(*it->second);
  }
  for (const MotionSegment* s : segs) {
    for (const FeatureObservation& o : s->observations) {
      auto lit = landmark_index.find({s->session_id, o.landmark_id});
      if (lit == landmark_index.end()) continue;
      auto kit = keyframe_index.find({s->session_id, o.keyframe_id});
      if (kit == keyframe_index.end()) {
        throw std::invalid_argument("build_segment_problem: observation outside its segment");
      }
      p.camera_factors.push_back({kit->second, lit->second, o.uv, o.sigma});
    }
  }
  sort_camera_factors(p.camera_factors);

  for (size_t si = 0; si < segs.size(); ++si) {
    const MotionSegment& s = *segs[si];
    const int off = segment_offset[si];
    for (int i = 0; i + 1 < s.size(); ++i) {
      p.inertial_factors.push_back(make_inertial_factor(
          off + i, off + i + 1,
          samples_between(s.imu_samples, s.keyframes[i].t, s.keyframes[i + 1].t), s.keyframes[i],
          calib_init.imu, noise));
    }
    if (si + 1 < segs.size() && segs[si + 1]->session_id == s.session_id) {
      const MotionSegment& next = *segs[si + 1];
      const int k0 = off + s.size() - 1;
      const int k1 = segment_offset[si + 1];
      if (next.first_keyframe == s.last_keyframe() + 1) {
        p.inertial_factors.push_back(make_inertial_factor(
            k0, k1, samples_between(s.imu_samples, s.keyframes.back().t, next.keyframes.front().t),
            s.keyframes.back(), calib_init.imu, noise));
      } else {
        p.bridge_factors.push_back({k0, k1, next.keyframes.front().t - s.keyframes.back().t});
      }
    }
  }
  std::sort(p.inertial_factors.begin(), p.inertial_factors.end(),
            [](const InertialFactor& a, const InertialFactor& b) { return a.k0 < b.k0; });

  p.gauge.assign(p.num_keyframes(), KeyframeGauge::kFree);
  p.partitions = partition_segments(segments_in, max_shared);
  for (const Partition& part : p.partitions) p.gauge[keyframe_index.at(part.anchor)] = KeyframeGauge::kAnchor;
  return p;
}

Mat3 anchor_rotation_basis(const Quat& q_GI) {
  const Vec3 n = q_GI.conjugate() * Vec3::UnitZ();
  // Any vector not parallel to n seeds the orthonormal complement.
  const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 b1 = (seed - seed.dot(n) * n).normalized();
  const Vec3 b2 = n.cross(b1);
  Mat3 B;
  B << b1, b2, n;
  return B;
}

Mat15 keyframe_column_transform(const CalibrationProblem& p, int k) {
  Mat15 T = Mat15::Identity();
  if (p.gauge[k] == KeyframeGauge::kFixed) {
    T.setZero();
  } else if (p.gauge[k] == KeyframeGauge::kAnchor) {
    Mat3 B = anchor_rotation_basis(p.keyframes[k].q_GI);
    B.col(2).setZero();
    T.block<3, 3>(kKfRot, kKfRot) = B;
    T.block<3, 3>(kKfPos, kKfPos).setZero();
  }
  return T;
}

Linearization linearize(const CalibrationProblem& p, bool with_jacobians) {
  Linearization lin;
  const int nc = static_cast<int>(p.camera_factors.size());
  const int ni = static_cast<int>(p.inertial_factors.size());
  lin.camera.resize(nc);
  lin.inertial.resize(ni);
  const Transform& T_CI = p.calibration.extrinsics.T_CI;
  const CameraIntrinsics& intr = p.calibration.camera;
  std::vector<Transform> poses(p.num_keyframes());
  for (int k = 0; k < p.num_keyframes(); ++k) poses[k] = p.keyframes[k].T_GI();

  int skipped = 0;
#pragma omp parallel for schedule(static) reduction(+ : skipped)
  for (int i = 0; i < nc; ++i) {
    const CameraFactor& f = p.camera_factors[i];
    CameraLinearization& out = lin.camera[i];
    try {
      ObservationJacobians jac;
      const Vec2 uv = predict_with_jacobians(poses[f.keyframe], T_CI, p.landmarks[f.landmark].l_G,
                                             intr, with_jacobians ? &jac : nullptr);
      out.valid = true;
      out.residual = uv - f.uv;
      if (with_jacobians) {
        out.d_pose = jac.d_pose;
        out.d_landmark = jac.d_landmark;
        out.d_calib.leftCols<5>() = jac.d_intrinsics;
        out.d_calib.rightCols<6>() = jac.d_extrinsics;
      }
    } catch (const BehindCameraError&) {
      out.valid = false;
      out.residual.setZero();
      ++skipped;
    }
  }
  lin.skipped_camera_factors = skipped;

  const Vec3 gravity = p.noise.gravity();
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < ni; ++i) {
    const InertialFactor& f = p.inertial_factors[i];
    const KeyframeState& x0 = p.keyframes[f.k0];
    const PreintegratedImu pre = preintegrate(f.samples, p.calibration.imu, {x0.b_g, x0.b_a}, p.noise);
    InertialJacobians jac;
    const InertialError e =
        inertial_error(x0, p.keyframes[f.k1], pre, gravity, with_jacobians ? &jac : nullptr);
    InertialLinearization& out = lin.inertial[i];
    out.residual = e.residual;
    if (with_jacobians) {
      out.d_k0 = jac.d_xk;
      out.d_k1 = jac.d_xk1;
      out.d_imu = jac.d_intrinsics;
    }
  }

  for (const BiasBridgeFactor& f : p.bridge_factors) {
    Vec6 r;
    r.head<3>() = p.keyframes[f.k1].b_g - p.keyframes[f.k0].b_g;
    r.tail<3>() = p.keyframes[f.k1].b_a - p.keyframes[f.k0].b_a;
    lin.bridge.push_back(r);
  }
  return lin;
}

CostBreakdown evaluate_cost(const CalibrationProblem& p) {
  const Linearization lin = linearize(p, false);
  CostBreakdown c;
  for (size_t i = 0; i < lin.camera.size(); ++i) {
    if (!lin.camera[i].valid) continue;
    const double sigma = p.camera_factors[i].sigma;
    const double s = lin.camera[i].residual.squaredNorm() / (sigma * sigma);
    c.camera += p.huber ? huber(s).first : s;
  }
  for (size_t i = 0; i < lin.inertial.size(); ++i) {
    const Vec15& r = lin.inertial[i].residual;
    c.inertial += r.dot(p.inertial_factors[i].weight * r);
  }
  for (size_t i = 0; i < lin.bridge.size(); ++i) {
    const double dt = p.bridge_factors[i].dt;
    const Vec6& r = lin.bridge[i];
    c.bridge += r.head<3>().squaredNorm() / (p.noise.sigma_bg * p.noise.sigma_bg * dt) +
                r.tail<3>().squaredNorm() / (p.noise.sigma_ba * p.noise.sigma_ba * dt);
  }
  c.total = c.camera + c.inertial + c.bridge;
  c.skipped_camera_factors = lin.skipped_camera_factors;
  return c;
}

double huber_weight(const CalibrationProblem& p, const CameraLinearization& l, double sigma) {
  if (!p.huber) return 1.0;
  return huber(l.residual.squaredNorm() / (sigma * sigma)).second;
}

ResidualEvaluation evaluate_residuals(const CalibrationProblem& p) {
  p.validate();
  const Linearization lin = linearize(p, true);
  ResidualEvaluation out;
  out.skipped_camera_factors = lin.skipped_camera_factors;
  const int rows = 2 * static_cast<int>(lin.camera.size()) +
                   15 * static_cast<int>(lin.inertial.size()) +
                   6 * static_cast<int>(lin.bridge.size());
  out.residual.resize(rows);
  std::vector<Eigen::Triplet<double>> trip;

  // Column masks as projections on each keyframe's 15 coordinates.
  std::vector<Mat15> mask(p.num_keyframes(), Mat15::Identity());
  for (int k = 0; k < p.num_keyframes(); ++k) {
    if (p.gauge[k] == KeyframeGauge::kFixed) {
      mask[k].setZero();
    } else if (p.gauge[k] == KeyframeGauge::kAnchor) {
      const Vec3 n = anchor_rotation_basis(p.keyframes[k].q_GI).col(2);
      mask[k].block<3, 3>(kKfRot, kKfRot) = Mat3::Identity() - n * n.transpose();
      mask[k].block<3, 3>(kKfPos, kKfPos).setZero();
    }
  }
  const double calib_mask = p.calibration_constant ? 0.0 : 1.0;
  const int cc = calibration_column(p);
  const auto add_block = [&](int row, int col, const Eigen::MatrixXd& M) {
    for (int c = 0; c < M.cols(); ++c) {
      for (int r = 0; r < M.rows(); ++r) {
        if (M(r, c) != 0.0) trip.emplace_back(row + r, col + c, M(r, c));
      }
    }
  };

  int row = 0;
  for (size_t i = 0; i < lin.camera.size(); ++i) {
    const CameraFactor& f = p.camera_factors[i];
    const CameraLinearization& l = lin.camera[i];
    out.block_offsets.push_back(row);
    out.block_weights.push_back(Eigen::Matrix2d::Identity() / (f.sigma * f.sigma));
    out.residual.segment<2>(row) = l.residual;
    if (l.valid) {
      Eigen::Matrix<double, 2, 15> jk = Eigen::Matrix<double, 2, 15>::Zero();
      jk.leftCols<6>() = l.d_pose;
      add_block(row, keyframe_column(f.keyframe), jk * mask[f.keyframe]);
      add_block(row, landmark_column(p, f.landmark), l.d_landmark);
      add_block(row, cc, calib_mask * l.d_calib);
    }
    row += 2;
  }
  for (size_t i = 0; i < lin.inertial.size(); ++i) {
    const InertialFactor& f = p.inertial_factors[i];
    const InertialLinearization& l = lin.inertial[i];
    out.block_offsets.push_back(row);
    out.block_weights.push_back(f.weight);
    out.residual.segment<15>(row) = l.residual;
    add_block(row, keyframe_column(f.k0), l.d_k0 * mask[f.k0]);
    add_block(row, keyframe_column(f.k1), l.d_k1 * mask[f.k1]);
    add_block(row, cc + kCalImu, calib_mask * l.d_imu);
    row += 15;
  }
  for (size_t i = 0; i < lin.bridge.size(); ++i) {
    const BiasBridgeFactor& f = p.bridge_factors[i];
    out.block_offsets.push_back(row);
    Vec6 w;
    w.head<3>().setConstant(1.0 / (p.noise.sigma_bg * p.noise.sigma_bg * f.dt));
    w.tail<3>().setConstant(1.0 / (p.noise.sigma_ba * p.noise.sigma_ba * f.dt));
    out.block_weights.push_back(w.asDiagonal().toDenseMatrix());
    out.residual.segment<6>(row) = lin.bridge[i];
    Eigen::Matrix<double, 6, 15> j = Eigen::Matrix<double, 6, 15>::Zero();
    j.rightCols<6>() = Mat6::Identity();
    add_block(row, keyframe_column(f.k0), -j * mask[f.k0]);
    add_block(row, keyframe_column(f.k1), j * mask[f.k1]);
    row += 6;
  }
  out.jacobian.resize(rows, num_columns(p));
  out.jacobian.setFromTriplets(trip.begin(), trip.end());
  return out;
}

void retract_problem(CalibrationProblem& p, const Eigen::VectorXd& delta) {
  if (delta.size() != num_columns(p)) throw std::invalid_argument("retract_problem: size mismatch");
  for (int k = 0; k < p.num_keyframes(); ++k) {
    if (p.gauge[k] == KeyframeGauge::kFixed) continue;
    Vec15 d = delta.segment<15>(keyframe_column(k));
    if (p.gauge[k] == KeyframeGauge::kAnchor) {
      const Vec3 n = anchor_rotation_basis(p.keyframes[k].q_GI).col(2);
      d.segment<3>(kKfRot) -= n * n.dot(d.segment<3>(kKfRot));
      d.segment<3>(kKfPos).setZero();
    }
    const Vec3 p_before = p.keyframes[k].p_GI;
    p.keyframes[k] = p.keyframes[k].retract(d);
    if (p.gauge[k] == KeyframeGauge::kAnchor) p.keyframes[k].p_GI = p_before;
  }
  for (int m = 0; m < p.num_landmarks(); ++m) {
    p.landmarks[m].l_G += delta.segment<3>(landmark_column(p, m));
  }
  if (!p.calibration_constant) {
    p.calibration = p.calibration.retract(delta.segment<kCalibDim>(calibration_column(p)));
  }
}

}  // namespace infocalib
