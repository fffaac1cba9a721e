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

#include "infocalib/eval.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace infocalib {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

struct MeanStd {
  double mean;
  double std;
};

MeanStd sample_stats(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace

AlignmentResult align(const std::vector<Transform>& estimate, const std::vector<Transform>& truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("align: pose counts differ");
  if (estimate.size() < 2) throw std::invalid_argument("align: need at least 2 poses");
  const double n = static_cast<double>(estimate.size());
  Vec3 me = Vec3::Zero();
  Vec3 mt = Vec3::Zero();
  for (size_t i = 0; i < estimate.size(); ++i) {
    me += estimate[i].translation;
    mt += truth[i].translation;
  }
  me /= n;
  mt /= n;
  double s_cos = 0.0;
  double s_sin = 0.0;
  for (size_t i = 0; i < estimate.size(); ++i) {
    const Vec3 e = estimate[i].translation - me;
    const Vec3 t = truth[i].translation - mt;
    s_cos += e.x() * t.x() + e.y() * t.y();
    s_sin += e.x() * t.y() - e.y() * t.x();
  }
  AlignmentResult out;
  out.yaw = (s_cos == 0.0 && s_sin == 0.0) ? 0.0 : std::atan2(s_sin, s_cos);
  out.translation = mt - yaw_rotation(out.yaw) * me;
  return out;
}

RmseReport relative_pose_rmse(const std::vector<Transform>& estimate, const std::vector<Transform>& truth,
                              const AlignmentResult& alignment) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("relative_pose_rmse: pose counts differ");
  const Transform T = alignment.transform();
  RmseReport r;
  for (size_t i = 0; i < estimate.size(); ++i) {
    const Transform a = T * estimate[i];
    r.translation_errors.push_back((a.translation - truth[i].translation).norm());
    r.rotation_errors.push_back(angle_between(a.rotation, truth[i].rotation) * kRadToDeg);
  }
  r.translation_rmse = rms(r.translation_errors);
  r.rotation_rmse = rms(r.rotation_errors);
  return r;
}

Vec26 calibration_error(const CalibrationState& estimate, const CalibrationState& truth) {
  return truth.local_difference(estimate);
}

std::vector<ParameterSummary> parameter_report(const std::vector<CalibrationState>& calibrations,
                                               const std::optional<CalibrationState>& truth) {
  if (calibrations.empty()) throw std::invalid_argument("parameter_report: no calibrations");
  std::vector<ParameterSummary> rows;
  auto scalar = [&](std::string name, std::string unit, auto get) {
    ParameterSummary row{std::move(name), std::move(unit), 0.0, 0.0, {}};
    std::vector<double> v;
    for (const CalibrationState& c : calibrations) v.push_back(get(c));
    const MeanStd ms = sample_stats(v);
    row.mean = ms.mean;
    row.std = ms.std;
    if (truth) {
      for (double x : v) row.errors.push_back(x - get(*truth));
    }
    rows.push_back(std::move(row));
  };
  auto rotation = [&](std::string name, auto get) {
    ParameterSummary row{std::move(name), "deg", 0.0, 0.0, {}};
    std::vector<Quat> qs;
    for (const CalibrationState& c : calibrations) qs.push_back(get(c));
    const Quat avg = average_quaternions(qs);
    row.mean = rotation_angle(avg) * kRadToDeg;
    double ss = 0.0;
    for (const Quat& q : qs) ss += std::pow(angle_between(q, avg) * kRadToDeg, 2);
    row.std = qs.size() > 1 ? std::sqrt(ss / static_cast<double>(qs.size() - 1)) : 0.0;
    if (truth) {
      for (const Quat& q : qs) row.errors.push_back(angle_between(q, get(*truth)) * kRadToDeg);
    }
    rows.push_back(std::move(row));
  };
  const char* axes[] = {"x", "y", "z"};
  scalar("fx", "px", [](const CalibrationState& c) { return c.camera.focal.x(); });
  scalar("fy", "px", [](const CalibrationState& c) { return c.camera.focal.y(); });
  scalar("cx", "px", [](const CalibrationState& c) { return c.camera.principal_point.x(); });
  scalar("cy", "px", [](const CalibrationState& c) { return c.camera.principal_point.y(); });
  scalar("w", "rad", [](const CalibrationState& c) { return c.camera.distortion; });
  rotation("q_CI", [](const CalibrationState& c) { return c.extrinsics.T_CI.rotation; });
  for (int i = 0; i < 3; ++i) {
    scalar(std::string("p_CI_") + axes[i], "m",
           [i](const CalibrationState& c) { return c.extrinsics.T_CI.translation(i); });
  }
  const std::pair<const char*, Vec3 ImuIntrinsics::*> vectors[] = {
      {"s_g_", &ImuIntrinsics::s_g}, {"m_g_", &ImuIntrinsics::m_g}, {"s_a_", &ImuIntrinsics::s_a},
      {"m_a_", &ImuIntrinsics::m_a}};
  for (const auto& [prefix, member] : vectors) {
    for (int i = 0; i < 3; ++i) {
      scalar(std::string(prefix) + axes[i], "1", [i, m = member](const CalibrationState& c) { return (c.imu.*m)(i); });
    }
  }
  rotation("q_AI", [](const CalibrationState& c) { return c.imu.q_AI; });
  return rows;
}

TrajectoryEvaluation evaluate_trajectory(const SessionData& data, const std::vector<KeyframeState>& truth,
                                         const CalibrationState& calibration, const NoiseModel& noise,
                                         const EvaluationOptions& options) {
  if (truth.size() != data.keyframes.size()) {
    throw std::invalid_argument("evaluate_trajectory: truth and estimate keyframe counts differ");
  }
  if (!(options.window_seconds > 0.0)) throw std::invalid_argument("evaluate_trajectory: window must be positive");
  TrajectoryEvaluation out;
  const int K = static_cast<int>(data.keyframes.size());
  int first = 0;
  while (first + 1 < K) {
    int last = first;
    while (last + 1 < K && data.keyframes[last + 1].t - data.keyframes[first].t < options.window_seconds - 1e-9) {
      ++last;
    }
    // A short tail joins the previous window instead of standing alone.
    if (last + 1 < K && K - (last + 1) < 2) last = K - 1;
    const int count = last - first + 1;
    ++out.windows;
    try {
      const MotionSegment seg = make_segment(data, first, count, out.windows);
      CalibrationProblem p = build_segment_problem({seg}, calibration, noise);
      p.calibration_constant = true;
      solve(p, options.solver);
      std::vector<Transform> est;
      std::vector<Transform> ref;
      for (int i = 0; i < count; ++i) {
        est.push_back(p.keyframes[i].T_GI());
        ref.push_back(truth[first + i].T_GI());
      }
      const RmseReport r = relative_pose_rmse(est, ref, align(est, ref));
      out.rmse.translation_errors.insert(out.rmse.translation_errors.end(), r.translation_errors.begin(),
                                         r.translation_errors.end());
      out.rmse.rotation_errors.insert(out.rmse.rotation_errors.end(), r.rotation_errors.begin(),
                                      r.rotation_errors.end());
    } catch (const SolverError&) {
      ++out.failed_windows;
    }
    first = last + 1;
  }
  out.rmse.translation_rmse = rms(out.rmse.translation_errors);
  out.rmse.rotation_rmse = rms(out.rmse.rotation_errors);
  return out;
}

}  // namespace infocalib
