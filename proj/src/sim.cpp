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

#include "infocalib/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace infocalib {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDeg = std::numbers::pi / 180.0;

// Gains of the loop that keeps the integrated ground truth on the analytic
// trajectory (1/s and 1/s^2).
constexpr double kTrackRotation = 2.0;
constexpr double kTrackPosition = 4.0;
constexpr double kTrackVelocity = 4.0;

double smoothstep(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double smoothstep_derivative(double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); }
double smoothstep_integral(double u) { return u * u * u * u * (2.5 + u * (-3.0 + u)); }

std::mt19937_64 make_engine(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return std::mt19937_64(seq);
}

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return sigma * Vec3(x, y, z);
}

// IMU x to -y, IMU y to -z, IMU z (camera optical axis) to +x.
Quat horizontal_camera_rotation() {
  Mat3 R;
  R << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  return Quat(R);
}

std::vector<Vec3> sample_box_surface(const ScenarioConfig& cfg, std::mt19937_64& rng) {
  const Vec3 d = cfg.world_max - cfg.world_min;
  const double areas[3] = {d.y() * d.z(), d.x() * d.z(), d.x() * d.y()};
  std::discrete_distribution<int> face({areas[0], areas[0], areas[1], areas[1], areas[2], areas[2]});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> points;
  points.reserve(cfg.landmark_count);
  for (int i = 0; i < cfg.landmark_count; ++i) {
    const int f = face(rng);
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = cfg.world_min[a] + u(rng) * d[a];
    const int axis = f / 2;
    p[axis] = (f % 2 == 0) ? cfg.world_min[axis] : cfg.world_max[axis];
    points.push_back(p);
  }
  return points;
}

}  // namespace

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("scenario config: " + field + " " + why);
  };
  if (!(duration > 0.0)) fail("duration_s", "must be positive");
  if (!(camera_rate > 0.0)) fail("camera_rate_hz", "must be positive");
  if (!(imu_rate > 0.0)) fail("imu_rate_hz", "must be positive");
  const double ratio = imu_rate / camera_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
    fail("imu_rate_hz", "must be an integer multiple of camera_rate_hz");
  }
  if (landmark_count < 3) fail("landmark_count", "must be at least 3");
  if ((world_max - world_min).minCoeff() <= 0.0) fail("world_max_m", "must exceed world_min_m");
  if (!(max_range > min_depth) || !(min_depth > 0.0)) fail("max_range_m", "must exceed min_depth_m > 0");
  if (image_width <= 0 || image_height <= 0) fail("image_size_px", "must be positive");
  if (max_features < 3) fail("max_features", "must be at least 3");
  if (max_track_length < 2) fail("max_track_length", "must be at least 2");
  if (min_track_length < 2) fail("min_track_length", "must be at least 2");
  if (min_parallax < 0.0) fail("min_parallax_deg", "must be non-negative");
  if (trajectory.ramp < 0.0) fail("ramp_s", "must be non-negative");
  for (const MotionPhase& ph : trajectory.phases) {
    if (!(ph.duration > 0.0)) fail("phases.duration_s", "must be positive");
  }
  for (const auto* list : {&trajectory.translation, &trajectory.rotation}) {
    for (const Sinusoid& s : *list) {
      if (s.axis < 0 || s.axis > 2) fail("sinusoid.axis", "must be 0, 1 or 2");
    }
  }
  if (init_position < 0 || init_rotation < 0 || init_velocity < 0 || init_landmark < 0 ||
      init_gyro_bias < 0 || init_accel_bias < 0) {
    fail("init_*", "perturbations must be non-negative");
  }
  noise.validate();
  calibration.validate();
}

int ScenarioConfig::imu_per_keyframe() const {
  return static_cast<int>(std::lround(imu_rate / camera_rate));
}

CalibrationState reference_calibration() {
  CalibrationState c;
  c.camera.focal = Vec2(256.30, 256.31);
  c.camera.principal_point = Vec2(313.19, 243.16);
  c.camera.distortion = 0.9208;
  c.extrinsics.T_CI =
      Transform(so3::exp(1.065 * kDeg * Vec3(1.0, -2.0, 0.5).normalized()),
                Vec3(4.93e-3, 7.05e-4, -6.09e-3));
  c.imu.s_g = Vec3(1.0 - 2.11e-3, 1.0 + 4.02e-3, 1.0 - 1.54e-3);
  c.imu.m_g = Vec3(7.36e-4, 3.96e-4, -4.95e-5);
  c.imu.s_a = Vec3(1.0 - 1.85e-2, 1.0 - 1.65e-2, 1.0 - 1.86e-2);
  c.imu.m_a = Vec3(1.35e-2, -2.78e-2, -3.19e-3);
  c.imu.q_AI = so3::exp(1.504 * kDeg * Vec3(-1.0, 0.5, 2.0).normalized());
  return c;
}

CalibrationState nominal_calibration() {
  CalibrationState c;
  c.camera.focal = Vec2(252.0, 252.0);
  c.camera.principal_point = Vec2(320.0, 240.0);
  c.camera.distortion = 0.93;
  return c;
}

ScenarioConfig preset_config(std::string_view name) {
  ScenarioConfig cfg;
  cfg.name = std::string(name);
  cfg.calibration = reference_calibration();
  TrajectorySpec& tr = cfg.trajectory;
  tr.base_rotation = horizontal_camera_rotation();
  if (name == "arvr" || name == "still") {
    cfg.duration = name == "arvr" ? 120.0 : 30.0;
    tr.translation = {{0, 0.25, 0.13, 0.0}, {1, 0.20, 0.17, 1.0}, {2, 0.10, 0.23, 2.0}};
    // Body y is vertical, x is pitch, z is roll for the horizontal camera.
    tr.rotation = {{1, 0.80, 0.19, 0.5}, {0, 0.35, 0.31, 0.0}, {2, 0.30, 0.41, 1.3}};
    if (name == "still") tr.phases = {{cfg.duration, 0.0, 0.0}};
  } else if (name == "nav") {
    cfg.duration = 300.0;
    const double f = 1.0 / 30.0;
    // Handheld walk: slow tilting, step bounce and sway, standing and turning in place.
    tr.translation = {{0, 8.0, f, std::numbers::pi / 2.0}, {1, 4.0, f, 0.0}, {2, 0.02, 1.8, 0.0}};
    tr.rotation = {{1, 0.05, 0.4, 0.0}, {0, 0.30, 0.10, 1.0}, {2, 0.25, 0.13, 2.0},
                   {0, 0.04, 0.9, 0.3}, {2, 0.04, 0.45, 1.1}};
    tr.yaw0 = std::numbers::pi / 2.0;
    tr.yaw_per_unit = kTwoPi * f;
    tr.phases = {{40.0, 1.0, 1.0}, {5.0, 0.0, 0.0}, {5.0, 0.0, 1.0}};
    tr.cycle_phases = true;
    cfg.landmark_count = 2000;
    cfg.world_min = Vec3(-14.0, -8.0, -1.5);
    cfg.world_max = Vec3(14.0, 8.0, 2.5);
    cfg.max_range = 15.0;
  } else {
    throw std::invalid_argument("unknown scenario preset: " + std::string(name));
  }
  return cfg;
}

ScenarioConfig session_config(const ScenarioConfig& base, int index) {
  if (index < 0) throw std::invalid_argument("session index must be non-negative");
  if (index == 0) return base;
  ScenarioConfig cfg = base;
  std::seed_seq seq{static_cast<std::uint32_t>(base.seed), static_cast<std::uint32_t>(base.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  cfg.seed = rng();
  std::uniform_real_distribution<double> offset(0.0, 1000.0);
  // Shifting warped time keeps the heading consistent with the path.
  const double dt = offset(rng);
  const double dr = offset(rng);
  for (Sinusoid& s : cfg.trajectory.translation) s.phase += kTwoPi * s.frequency * dt;
  for (Sinusoid& s : cfg.trajectory.rotation) s.phase += kTwoPi * s.frequency * dr;
  cfg.trajectory.yaw0 += cfg.trajectory.yaw_per_unit * dt;
  return cfg;
}

Trajectory::Trajectory(TrajectorySpec spec) : spec_(std::move(spec)) {
  double t = 0.0;
  for (const MotionPhase& ph : spec_.phases) {
    phase_start_.push_back(t);
    t += ph.duration;
  }
}

Trajectory::Progress Trajectory::progress(double t, bool translation) const {
  if (spec_.phases.empty()) return {t, 1.0, 0.0};
  auto rate_of = [&](size_t j) {
    return translation ? spec_.phases[j].translation_rate : spec_.phases[j].rotation_rate;
  };
  const size_t n = spec_.phases.size();
  // Progress within one pass over the phases; the first phase ramps from the
  // last one when cycling.
  auto within = [&](double t_local) -> Progress {
    double tau = 0.0;
    for (size_t j = 0; j < n; ++j) {
      const double start = phase_start_[j];
      const bool last = j + 1 == n;
      const double end = last ? std::numeric_limits<double>::infinity() : phase_start_[j + 1];
      const double r = rate_of(j);
      const double r_prev = j > 0 ? rate_of(j - 1) : (spec_.cycle_phases ? rate_of(n - 1) : r);
      const double delta = r - r_prev;
      const double ramp = std::min(spec_.ramp, spec_.phases[j].duration);
      const double local = std::max(t_local, start) - start;
      if (t_local < end || last) {
        if (ramp > 0.0 && local < ramp) {
          const double u = local / ramp;
          return {tau + r_prev * local + delta * ramp * smoothstep_integral(u),
                  r_prev + delta * smoothstep(u), delta * smoothstep_derivative(u) / ramp};
        }
        return {tau + r_prev * ramp + 0.5 * delta * ramp + r * (local - ramp), r, 0.0};
      }
      tau += r_prev * ramp + 0.5 * delta * ramp + r * (spec_.phases[j].duration - ramp);
    }
    return {tau, 0.0, 0.0};
  };
  if (!spec_.cycle_phases || t < 0.0) return within(t);
  const double period = phase_start_.back() + spec_.phases.back().duration;
  const double cycles = std::floor(t / period);
  Progress p = within(t - cycles * period);
  p.tau += cycles * within(period).tau;
  return p;
}

TrajectoryPoint Trajectory::sample(double t) const {
  const Progress tp = translation_progress(t);
  const Progress rp = rotation_progress(t);
  TrajectoryPoint out;
  out.p_GI = spec_.center;
  out.v_GI.setZero();
  out.a_GI.setZero();
  for (const Sinusoid& s : spec_.translation) {
    const double w = kTwoPi * s.frequency;
    const double th = w * tp.tau + s.phase;
    out.p_GI[s.axis] += s.amplitude * std::sin(th);
    out.v_GI[s.axis] += s.amplitude * w * std::cos(th) * tp.rate;
    out.a_GI[s.axis] += -s.amplitude * w * w * std::sin(th) * tp.rate * tp.rate +
                        s.amplitude * w * std::cos(th) * tp.accel;
  }
  Vec3 phi = Vec3::Zero();
  Vec3 phi_dot = Vec3::Zero();
  for (const Sinusoid& s : spec_.rotation) {
    const double w = kTwoPi * s.frequency;
    const double th = w * rp.tau + s.phase;
    phi[s.axis] += s.amplitude * std::sin(th);
    phi_dot[s.axis] += s.amplitude * w * std::cos(th) * rp.rate;
  }
  const double yaw = spec_.yaw0 + spec_.yaw_per_unit * tp.tau;
  const double yaw_dot = spec_.yaw_per_unit * tp.rate;
  const Quat E = so3::exp(phi);
  out.q_GI = (yaw_rotation(yaw) * spec_.base_rotation * E).normalized();
  out.omega_I = E.conjugate() * (spec_.base_rotation.conjugate() * Vec3::UnitZ()) * yaw_dot +
                so3::right_jacobian(phi) * phi_dot;
  return out;
}

Trajectory generate_trajectory(const ScenarioConfig& cfg) {
  cfg.validate();
  return Trajectory(cfg.trajectory);
}

SessionData SimulatedSession::session_data(int session_id) const {
  return {session_id, init_keyframes, init_landmarks, observations, imu};
}

SessionData SimulatedSession::truth_session_data(int session_id) const {
  return {session_id, truth_keyframes, truth_landmarks, observations, imu};
}

SimulatedSession generate_measurements(const ScenarioConfig& cfg, const Trajectory& trajectory) {
  cfg.validate();
  SimulatedSession out;
  out.config = cfg;
  out.calibration = cfg.calibration;

  const int per_kf = cfg.imu_per_keyframe();
  const int num_kf = static_cast<int>(std::floor(cfg.duration * cfg.camera_rate + 1e-9)) + 1;
  const int num_imu = (num_kf - 1) * per_kf + 1;
  const Vec3 g = cfg.noise.gravity();
  const ImuIntrinsics& intr = cfg.calibration.imu;

  auto imu_rng = make_engine(cfg.seed, 1);
  auto world_rng = make_engine(cfg.seed, 2);
  auto track_rng = make_engine(cfg.seed, 3);
  auto pixel_rng = make_engine(cfg.seed, 4);
  auto init_rng = make_engine(cfg.seed, 5);

  // Ground truth is the midpoint integration of the true IMU signals, so the
  // preintegrated factors are exact on noise-free data.
  std::vector<KeyframeState> states(num_imu);
  std::vector<Vec3> omega(num_imu);
  std::vector<Vec3> accel(num_imu);
  TrajectoryPoint ref = trajectory.sample(0.0);
  states[0].t = 0.0;
  states[0].q_GI = ref.q_GI;
  states[0].p_GI = ref.p_GI;
  states[0].v_GI = ref.v_GI;
  states[0].b_g = cfg.initial_gyro_bias;
  states[0].b_a = cfg.initial_accel_bias;
  omega[0] = ref.omega_I;
  accel[0] = ref.a_GI;
  const double dt = 1.0 / cfg.imu_rate;
  const double sqrt_dt = std::sqrt(dt);
  for (int i = 0; i + 1 < num_imu; ++i) {
    const KeyframeState& s = states[i];
    KeyframeState& n = states[i + 1];
    n.t = static_cast<double>(i + 1) / cfg.imu_rate;
    const TrajectoryPoint next = trajectory.sample(n.t);
    const Vec3 e_R = so3::log(s.q_GI.conjugate() * ref.q_GI);
    omega[i + 1] = next.omega_I + kTrackRotation * e_R;
    accel[i + 1] = next.a_GI + kTrackPosition * (ref.p_GI - s.p_GI) +
                   kTrackVelocity * (ref.v_GI - s.v_GI);
    n.q_GI = (s.q_GI * so3::exp(0.5 * (omega[i] + omega[i + 1]) * dt)).normalized();
    const Vec3 f0 = s.q_GI.conjugate() * (accel[i] - g);
    const Vec3 f1 = n.q_GI.conjugate() * (accel[i + 1] - g);
    const Vec3 a_bar = 0.5 * (s.q_GI * f0 + n.q_GI * f1);
    n.v_GI = s.v_GI + (g + a_bar) * dt;
    n.p_GI = s.p_GI + s.v_GI * dt + 0.5 * (g + a_bar) * dt * dt;
    n.b_g = s.b_g;
    n.b_a = s.b_a;
    if (cfg.add_noise) {
      n.b_g += gaussian3(imu_rng, cfg.noise.sigma_bg * sqrt_dt);
      n.b_a += gaussian3(imu_rng, cfg.noise.sigma_ba * sqrt_dt);
    }
    ref = next;
  }

  out.imu.resize(num_imu);
  const double sg = cfg.noise.sigma_g / sqrt_dt;
  const double sa = cfg.noise.sigma_a / sqrt_dt;
  for (int i = 0; i < num_imu; ++i) {
    const KeyframeState& s = states[i];
    Vec3 ng = Vec3::Zero();
    Vec3 na = Vec3::Zero();
    if (cfg.add_noise) {
      ng = gaussian3(imu_rng, sg);
      na = gaussian3(imu_rng, sa);
    }
    out.imu[i].t = s.t;
    out.imu[i].omega_meas = simulate_gyro(omega[i], intr, s.b_g, ng);
    out.imu[i].accel_meas =
        simulate_accel(accel[i], s.q_GI.conjugate().toRotationMatrix(), intr, s.b_a, na, g);
  }
  for (int k = 0; k < num_kf; ++k) out.truth_keyframes.push_back(states[k * per_kf]);

  // Feature tracks over a static point field.
  const std::vector<Vec3> points = sample_box_surface(cfg, world_rng);
  struct Track {
    int point;
    std::vector<FeatureObservation> obs;
    int age = 0;  // keyframes observed while the camera moved
  };
  std::vector<Track> tracks;
  std::map<int, int> active;  // point -> track index
  const Transform& T_CI = cfg.calibration.extrinsics.T_CI;
  const CameraIntrinsics& cam = cfg.calibration.camera;
  std::normal_distribution<double> pixel_noise(0.0, 1.0);
  for (int k = 0; k < num_kf; ++k) {
    const KeyframeState& x = out.truth_keyframes[k];
    const Transform T_CG = compose(T_CI, x.T_GI().inverse());
    // Tracks do not age while the camera is at rest.
    const bool moved = k == 0 || (x.p_GI - out.truth_keyframes[k - 1].p_GI).norm() > 1e-3 ||
                       angle_between(x.q_GI, out.truth_keyframes[k - 1].q_GI) > 1e-3;
    std::map<int, Vec2> visible;
    for (int j = 0; j < static_cast<int>(points.size()); ++j) {
      if ((points[j] - x.p_GI).norm() > cfg.max_range) continue;
      const Vec3 l_C = T_CG * points[j];
      if (l_C.z() < cfg.min_depth) continue;
      const Vec2 uv = project(l_C, cam);
      if (!inside_image(uv, cfg.image_width, cfg.image_height, cfg.image_margin)) continue;
      visible.emplace(j, uv);
    }
    std::map<int, int> next_active;
    for (const auto& [pt, ti] : active) {
      auto it = visible.find(pt);
      if (it == visible.end()) continue;
      if (tracks[ti].age >= cfg.max_track_length) continue;
      next_active.emplace(pt, ti);
    }
    std::vector<int> candidates;
    for (const auto& [pt, uv] : visible) {
      if (!next_active.contains(pt) && !active.contains(pt)) candidates.push_back(pt);
    }
    std::shuffle(candidates.begin(), candidates.end(), track_rng);
    for (int pt : candidates) {
      if (static_cast<int>(next_active.size()) >= cfg.max_features) break;
      next_active.emplace(pt, static_cast<int>(tracks.size()));
      tracks.push_back({pt, {}});
    }
    for (const auto& [pt, ti] : next_active) {
      FeatureObservation o;
      o.keyframe_id = k;
      o.uv = visible.at(pt);
      o.sigma = cfg.noise.sigma_c;
      if (cfg.add_noise) {
        const double du = pixel_noise(pixel_rng);
        const double dv = pixel_noise(pixel_rng);
        o.uv += cfg.noise.sigma_c * Vec2(du, dv);
      }
      tracks[ti].obs.push_back(o);
      if (moved || tracks[ti].obs.size() == 1) ++tracks[ti].age;
    }
    active = std::move(next_active);
  }

  auto parallax = [&](const Track& tr) {
    const Vec3 c0 = out.truth_keyframes[tr.obs.front().keyframe_id].T_GI() *
                    cfg.calibration.extrinsics.T_CI.inverse().translation;
    const Vec3 c1 = out.truth_keyframes[tr.obs.back().keyframe_id].T_GI() *
                    cfg.calibration.extrinsics.T_CI.inverse().translation;
    const Vec3 r0 = (points[tr.point] - c0).normalized();
    const Vec3 r1 = (points[tr.point] - c1).normalized();
    return std::acos(std::clamp(r0.dot(r1), -1.0, 1.0));
  };
  std::vector<int> per_keyframe(num_kf, 0);
  std::vector<char> keep(tracks.size(), 0);
  std::vector<std::pair<double, int>> low_parallax;
  for (size_t i = 0; i < tracks.size(); ++i) {
    if (static_cast<int>(tracks[i].obs.size()) < cfg.min_track_length) continue;
    const double a = parallax(tracks[i]);
    if (a < cfg.min_parallax) {
      low_parallax.emplace_back(-a, static_cast<int>(i));
      continue;
    }
    keep[i] = 1;
    for (const auto& o : tracks[i].obs) ++per_keyframe[o.keyframe_id];
  }
  // Keyframes left with too few landmarks, e.g. during pure rotation, take
  // back their rejected tracks with the most parallax.
  std::sort(low_parallax.begin(), low_parallax.end());
  for (const auto& [neg, i] : low_parallax) {
    bool needed = false;
    for (const auto& o : tracks[i].obs) needed = needed || per_keyframe[o.keyframe_id] < 3;
    if (!needed) continue;
    keep[i] = 1;
    for (const auto& o : tracks[i].obs) ++per_keyframe[o.keyframe_id];
  }
  for (size_t i = 0; i < tracks.size(); ++i) {
    if (!keep[i]) continue;
    const Track& tr = tracks[i];
    const int id = static_cast<int>(out.truth_landmarks.size());
    out.truth_landmarks.push_back({id, points[tr.point]});
    for (FeatureObservation o : tr.obs) {
      o.landmark_id = id;
      out.observations.push_back(o);
    }
  }
  for (int k = 0; k < num_kf; ++k) {
    if (per_keyframe[k] < 3) {
      throw std::runtime_error("simulation: keyframe " + std::to_string(k) + " observes only " +
                               std::to_string(per_keyframe[k]) + " landmarks");
    }
  }
  std::sort(out.observations.begin(), out.observations.end(),
            [](const FeatureObservation& a, const FeatureObservation& b) {
              return std::tie(a.keyframe_id, a.landmark_id) < std::tie(b.keyframe_id, b.landmark_id);
            });

  for (const KeyframeState& x : out.truth_keyframes) {
    KeyframeState y = x;
    y.q_GI = retract(x.q_GI, gaussian3(init_rng, cfg.init_rotation));
    y.p_GI += gaussian3(init_rng, cfg.init_position);
    y.v_GI += gaussian3(init_rng, cfg.init_velocity);
    y.b_g += gaussian3(init_rng, cfg.init_gyro_bias);
    y.b_a += gaussian3(init_rng, cfg.init_accel_bias);
    out.init_keyframes.push_back(y);
  }
  for (const Landmark& l : out.truth_landmarks) {
    out.init_landmarks.push_back({l.id, l.l_G + gaussian3(init_rng, cfg.init_landmark)});
  }
  return out;
}

}  // namespace infocalib
