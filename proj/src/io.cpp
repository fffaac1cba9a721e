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

#include "infocalib/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace infocalib::io {

namespace {

using json = nlohmann::ordered_json;
using Vec4 = Eigen::Matrix<double, 4, 1>;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

// Doubles that may be infinite are stored as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

template <int N>
json vec(const Eigen::Matrix<double, N, 1>& v) {
  json a = json::array();
  for (int i = 0; i < N; ++i) a.push_back(v(i));
  return a;
}

json quat(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

// Walks a JSON object, reports the dotted path of a bad field, and rejects
// keys that were never consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    if (!j_.contains(key)) fail(key, "missing");
    seen_.insert(key);
    return j_.at(key);
  }

  Reader child(const std::string& key) { return Reader(at(key), name(key)); }

  double number(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }

  template <typename Int>
  Int integer(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned()) return v.get<Int>();
      if (v.get<std::int64_t>() < 0) fail(key, "expected a non-negative integer");
    }
    return v.get<Int>();
  }

  bool boolean(const std::string& key) {
    const json& v = at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  template <int N>
  Eigen::Matrix<double, N, 1> vector(const std::string& key) {
    const json& v = at(key);
    if (!v.is_array() || v.size() != static_cast<size_t>(N)) {
      fail(key, "expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
      if (!v[i].is_number()) fail(key, "expected numbers");
      out(i) = v[i].get<double>();
    }
    return out;
  }

  Quat quaternion(const std::string& key) {
    const Vec4 v = vector<4>(key);
    if (std::abs(v.norm() - 1.0) > 1e-9) fail(key, "quaternion is not unit length");
    return Quat(v(0), v(1), v(2), v(3));
  }

  template <typename F>
  void optional(const std::string& key, F&& f) {
    if (has(key)) f(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(key, "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw FormatError(name(key) + ": " + msg);
  }

  std::string name(const std::string& key) const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json calibration_json(const CalibrationState& c) {
  json j;
  j["camera"] = {{"focal_length_px", vec<2>(c.camera.focal)},
                 {"principal_point_px", vec<2>(c.camera.principal_point)},
                 {"fov_w_rad", c.camera.distortion}};
  j["extrinsics"] = {{"q_CI_wxyz", quat(c.extrinsics.T_CI.rotation)},
                     {"p_CI_m", vec<3>(c.extrinsics.T_CI.translation)}};
  j["imu"] = {{"gyro_scale", vec<3>(c.imu.s_g)},
              {"gyro_misalignment", vec<3>(c.imu.m_g)},
              {"accel_scale", vec<3>(c.imu.s_a)},
              {"accel_misalignment", vec<3>(c.imu.m_a)},
              {"q_AI_wxyz", quat(c.imu.q_AI)}};
  return j;
}

// Overwrites the fields present in `r`.
void read_calibration_fields(Reader r, CalibrationState& c) {
  r.optional("camera", [&](const std::string& k) {
    Reader cam = r.child(k);
    cam.optional("focal_length_px", [&](const std::string& f) { c.camera.focal = cam.vector<2>(f); });
    cam.optional("principal_point_px",
                 [&](const std::string& f) { c.camera.principal_point = cam.vector<2>(f); });
    cam.optional("fov_w_rad", [&](const std::string& f) { c.camera.distortion = cam.number(f); });
    cam.finish();
  });
  r.optional("extrinsics", [&](const std::string& k) {
    Reader ext = r.child(k);
    ext.optional("q_CI_wxyz", [&](const std::string& f) { c.extrinsics.T_CI.rotation = ext.quaternion(f); });
    ext.optional("p_CI_m", [&](const std::string& f) { c.extrinsics.T_CI.translation = ext.vector<3>(f); });
    ext.finish();
  });
  r.optional("imu", [&](const std::string& k) {
    Reader imu = r.child(k);
    imu.optional("gyro_scale", [&](const std::string& f) { c.imu.s_g = imu.vector<3>(f); });
    imu.optional("gyro_misalignment", [&](const std::string& f) { c.imu.m_g = imu.vector<3>(f); });
    imu.optional("accel_scale", [&](const std::string& f) { c.imu.s_a = imu.vector<3>(f); });
    imu.optional("accel_misalignment", [&](const std::string& f) { c.imu.m_a = imu.vector<3>(f); });
    imu.optional("q_AI_wxyz", [&](const std::string& f) { c.imu.q_AI = imu.quaternion(f); });
    imu.finish();
  });
  r.finish();
}

json noise_json(const NoiseModel& n) {
  return {{"gyro_noise_rad_per_s_sqrt_hz", n.sigma_g},
          {"accel_noise_m_per_s2_sqrt_hz", n.sigma_a},
          {"gyro_bias_walk_rad_per_s2_sqrt_hz", n.sigma_bg},
          {"accel_bias_walk_m_per_s3_sqrt_hz", n.sigma_ba},
          {"pixel_noise_px", n.sigma_c},
          {"gravity_m_per_s2", n.gravity_magnitude}};
}

void read_noise_fields(Reader r, NoiseModel& n) {
  const std::pair<const char*, double NoiseModel::*> fields[] = {
      {"gyro_noise_rad_per_s_sqrt_hz", &NoiseModel::sigma_g},
      {"accel_noise_m_per_s2_sqrt_hz", &NoiseModel::sigma_a},
      {"gyro_bias_walk_rad_per_s2_sqrt_hz", &NoiseModel::sigma_bg},
      {"accel_bias_walk_m_per_s3_sqrt_hz", &NoiseModel::sigma_ba},
      {"pixel_noise_px", &NoiseModel::sigma_c},
      {"gravity_m_per_s2", &NoiseModel::gravity_magnitude}};
  for (const auto& [key, member] : fields) {
    r.optional(key, [&, m = member](const std::string& k) { n.*m = r.number(k); });
  }
  r.finish();
}

json normalization_json(const MetricNormalization& n) { return {{"sigma_ref_minimal_coordinates", vec<26>(n.sigma_ref)}}; }

MetricNormalization read_normalization(Reader r) {
  MetricNormalization n;
  n.sigma_ref = r.vector<26>("sigma_ref_minimal_coordinates");
  r.finish();
  try {
    n.validate();
  } catch (const std::invalid_argument& e) {
    r.fail("sigma_ref_minimal_coordinates", e.what());
  }
  return n;
}

template <typename F>
auto validated(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

// Text tables.

std::string format_row(std::initializer_list<double> values) {
  std::string line;
  char buf[32];
  for (double v : values) {
    if (!line.empty()) line += ' ';
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    line += buf;
  }
  line += '\n';
  return line;
}

std::string format_ints_then(std::initializer_list<long long> ints, std::initializer_list<double> values) {
  std::string line;
  for (long long i : ints) {
    if (!line.empty()) line += ' ';
    line += std::to_string(i);
  }
  std::string rest = format_row(values);
  return line.empty() ? rest : line + ' ' + rest;
}

// Calls f(row, line_number) for every data line with exactly `columns` fields.
template <typename F>
void for_each_row(const fs::path& path, int columns, F&& f) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    row.clear();
    const char* p = line.c_str();
    char* end = nullptr;
    while (true) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (*p == '\0') break;
      const double v = std::strtod(p, &end);
      if (end == p) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number");
      row.push_back(v);
      p = end;
    }
    if (static_cast<int>(row.size()) != columns) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                        " columns, found " + std::to_string(row.size()));
    }
    f(row, lineno);
  }
}

int as_int(double v, const fs::path& path, int lineno) {
  if (v != std::floor(v) || std::abs(v) > 2e9) {
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected an integer id");
  }
  return static_cast<int>(v);
}

json states_json(const std::vector<KeyframeState>& states) {
  json a = json::array();
  for (const auto& s : states) {
    a.push_back({s.t, s.q_GI.w(), s.q_GI.x(), s.q_GI.y(), s.q_GI.z(), s.p_GI.x(), s.p_GI.y(), s.p_GI.z(),
                 s.v_GI.x(), s.v_GI.y(), s.v_GI.z(), s.b_g.x(), s.b_g.y(), s.b_g.z(), s.b_a.x(), s.b_a.y(),
                 s.b_a.z()});
  }
  return a;
}

KeyframeState state_from_row(const double* r) {
  KeyframeState s;
  s.t = r[0];
  s.q_GI = Quat(r[1], r[2], r[3], r[4]);
  s.p_GI = Vec3(r[5], r[6], r[7]);
  s.v_GI = Vec3(r[8], r[9], r[10]);
  s.b_g = Vec3(r[11], r[12], r[13]);
  s.b_a = Vec3(r[14], r[15], r[16]);
  return s;
}

std::vector<double> numbers(const json& row, size_t n, const std::string& what) {
  if (!row.is_array() || row.size() != n) throw FormatError(what + ": expected rows of " + std::to_string(n));
  std::vector<double> out;
  for (const auto& v : row) {
    if (!v.is_number()) throw FormatError(what + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string calibration_to_string(const CalibrationFile& f) {
  json j;
  j["schema_version"] = f.schema_version;
  j["calibration"] = calibration_json(f.calibration);
  j["noise"] = noise_json(f.noise);
  if (f.normalization) j["normalization"] = normalization_json(*f.normalization);
  j["provenance"] = {{"sessions", f.provenance.sessions},
                     {"mode", f.provenance.mode},
                     {"metric", f.provenance.metric},
                     {"created_utc", f.provenance.created}};
  return j.dump(2) + "\n";
}

CalibrationFile calibration_from_string(const std::string& text) {
  const json j = parse_json(text, "calibration file");
  Reader r(j, "");
  CalibrationFile f;
  f.schema_version = r.integer<int>("schema_version");
  if (f.schema_version != kSchemaVersion) r.fail("schema_version", "unsupported version");
  {
    // Every calibration field is required here.
    const json& c = r.at("calibration");
    for (const char* k : {"camera", "extrinsics", "imu"}) {
      if (!c.is_object() || !c.contains(k)) throw FormatError(std::string("calibration.") + k + ": missing");
    }
    const json& cam = c.at("camera");
    const json& ext = c.at("extrinsics");
    const json& imu = c.at("imu");
    for (const char* k : {"focal_length_px", "principal_point_px", "fov_w_rad"}) {
      if (!cam.contains(k)) throw FormatError(std::string("calibration.camera.") + k + ": missing");
    }
    for (const char* k : {"q_CI_wxyz", "p_CI_m"}) {
      if (!ext.contains(k)) throw FormatError(std::string("calibration.extrinsics.") + k + ": missing");
    }
    for (const char* k : {"gyro_scale", "gyro_misalignment", "accel_scale", "accel_misalignment", "q_AI_wxyz"}) {
      if (!imu.contains(k)) throw FormatError(std::string("calibration.imu.") + k + ": missing");
    }
    read_calibration_fields(Reader(c, "calibration"), f.calibration);
  }
  read_noise_fields(r.child("noise"), f.noise);
  if (r.has("normalization")) f.normalization = read_normalization(r.child("normalization"));
  r.optional("provenance", [&](const std::string& k) {
    Reader p = r.child(k);
    p.optional("sessions", [&](const std::string& s) {
      const json& a = p.at(s);
      if (!a.is_array()) p.fail(s, "expected an array");
      for (const auto& v : a) {
        if (!v.is_number_integer()) p.fail(s, "expected integers");
        f.provenance.sessions.push_back(v.get<int>());
      }
    });
    p.optional("mode", [&](const std::string& s) { f.provenance.mode = p.string(s); });
    p.optional("metric", [&](const std::string& s) { f.provenance.metric = p.string(s); });
    p.optional("created_utc", [&](const std::string& s) { f.provenance.created = p.string(s); });
    p.finish();
  });
  r.finish();
  validated("calibration", [&] {
    f.calibration.validate();
    return 0;
  });
  validated("noise", [&] {
    f.noise.validate();
    return 0;
  });
  return f;
}

void write_calibration(const fs::path& path, const CalibrationFile& f) { write_text(path, calibration_to_string(f)); }

CalibrationFile read_calibration(const fs::path& path) {
  try {
    return calibration_from_string(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string scenario_to_string(const ScenarioConfig& cfg) {
  const TrajectorySpec& tr = cfg.trajectory;
  auto sinusoids = [](const std::vector<Sinusoid>& v, const char* amp_key) {
    json a = json::array();
    for (const Sinusoid& s : v) {
      a.push_back({{"axis", s.axis}, {amp_key, s.amplitude}, {"frequency_hz", s.frequency}, {"phase_rad", s.phase}});
    }
    return a;
  };
  json phases = json::array();
  for (const MotionPhase& p : tr.phases) {
    phases.push_back(
        {{"duration_s", p.duration}, {"translation_rate", p.translation_rate}, {"rotation_rate", p.rotation_rate}});
  }
  json j;
  j["name"] = cfg.name;
  j["duration_s"] = cfg.duration;
  j["camera_rate_hz"] = cfg.camera_rate;
  j["imu_rate_hz"] = cfg.imu_rate;
  j["trajectory"] = {{"center_m", vec<3>(tr.center)},
                     {"translation_sinusoids", sinusoids(tr.translation, "amplitude_m")},
                     {"rotation_sinusoids", sinusoids(tr.rotation, "amplitude_rad")},
                     {"base_rotation_wxyz", quat(tr.base_rotation)},
                     {"yaw0_rad", tr.yaw0},
                     {"yaw_rad_per_progress", tr.yaw_per_unit},
                     {"phases", phases},
                     {"cycle_phases", tr.cycle_phases},
                     {"ramp_s", tr.ramp}};
  j["landmark_count"] = cfg.landmark_count;
  j["world_min_m"] = vec<3>(cfg.world_min);
  j["world_max_m"] = vec<3>(cfg.world_max);
  j["max_range_m"] = cfg.max_range;
  j["min_depth_m"] = cfg.min_depth;
  j["image_width_px"] = cfg.image_width;
  j["image_height_px"] = cfg.image_height;
  j["image_margin_px"] = cfg.image_margin;
  j["max_features"] = cfg.max_features;
  j["max_track_length"] = cfg.max_track_length;
  j["min_track_length"] = cfg.min_track_length;
  j["min_parallax_rad"] = cfg.min_parallax;
  j["calibration"] = calibration_json(cfg.calibration);
  j["noise"] = noise_json(cfg.noise);
  j["add_noise"] = cfg.add_noise;
  j["initial_gyro_bias_rad_per_s"] = vec<3>(cfg.initial_gyro_bias);
  j["initial_accel_bias_m_per_s2"] = vec<3>(cfg.initial_accel_bias);
  j["init_sigma"] = {{"position_m", cfg.init_position},         {"rotation_rad", cfg.init_rotation},
                     {"velocity_m_per_s", cfg.init_velocity},   {"landmark_m", cfg.init_landmark},
                     {"gyro_bias_rad_per_s", cfg.init_gyro_bias}, {"accel_bias_m_per_s2", cfg.init_accel_bias}};
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

ScenarioConfig scenario_from_string(const std::string& text) {
  const json j = parse_json(text, "scenario config");
  Reader r(j, "");
  ScenarioConfig cfg;
  r.optional("preset", [&](const std::string& k) {
    const std::string name = r.string(k);
    try {
      cfg = preset_config(name);
    } catch (const std::invalid_argument& e) {
      r.fail(k, e.what());
    }
  });
  r.optional("name", [&](const std::string& k) { cfg.name = r.string(k); });
  const std::pair<const char*, double ScenarioConfig::*> doubles[] = {
      {"duration_s", &ScenarioConfig::duration},       {"camera_rate_hz", &ScenarioConfig::camera_rate},
      {"imu_rate_hz", &ScenarioConfig::imu_rate},      {"max_range_m", &ScenarioConfig::max_range},
      {"min_depth_m", &ScenarioConfig::min_depth},     {"image_margin_px", &ScenarioConfig::image_margin},
      {"min_parallax_rad", &ScenarioConfig::min_parallax}};
  for (const auto& [key, member] : doubles) {
    r.optional(key, [&, m = member](const std::string& k) { cfg.*m = r.number(k); });
  }
  const std::pair<const char*, int ScenarioConfig::*> ints[] = {
      {"landmark_count", &ScenarioConfig::landmark_count}, {"image_width_px", &ScenarioConfig::image_width},
      {"image_height_px", &ScenarioConfig::image_height},  {"max_features", &ScenarioConfig::max_features},
      {"max_track_length", &ScenarioConfig::max_track_length},
      {"min_track_length", &ScenarioConfig::min_track_length}};
  for (const auto& [key, member] : ints) {
    r.optional(key, [&, m = member](const std::string& k) { cfg.*m = r.integer<int>(k); });
  }
  const std::pair<const char*, Vec3 ScenarioConfig::*> vectors[] = {
      {"world_min_m", &ScenarioConfig::world_min},
      {"world_max_m", &ScenarioConfig::world_max},
      {"initial_gyro_bias_rad_per_s", &ScenarioConfig::initial_gyro_bias},
      {"initial_accel_bias_m_per_s2", &ScenarioConfig::initial_accel_bias}};
  for (const auto& [key, member] : vectors) {
    r.optional(key, [&, m = member](const std::string& k) { cfg.*m = r.vector<3>(k); });
  }
  r.optional("add_noise", [&](const std::string& k) { cfg.add_noise = r.boolean(k); });
  r.optional("seed", [&](const std::string& k) { cfg.seed = r.integer<std::uint64_t>(k); });
  r.optional("calibration", [&](const std::string& k) { read_calibration_fields(r.child(k), cfg.calibration); });
  r.optional("noise", [&](const std::string& k) { read_noise_fields(r.child(k), cfg.noise); });
  r.optional("init_sigma", [&](const std::string& k) {
    Reader s = r.child(k);
    const std::pair<const char*, double ScenarioConfig::*> sig[] = {
        {"position_m", &ScenarioConfig::init_position},       {"rotation_rad", &ScenarioConfig::init_rotation},
        {"velocity_m_per_s", &ScenarioConfig::init_velocity}, {"landmark_m", &ScenarioConfig::init_landmark},
        {"gyro_bias_rad_per_s", &ScenarioConfig::init_gyro_bias},
        {"accel_bias_m_per_s2", &ScenarioConfig::init_accel_bias}};
    for (const auto& [key, member] : sig) {
      s.optional(key, [&, m = member](const std::string& f) { cfg.*m = s.number(f); });
    }
    s.finish();
  });
  r.optional("trajectory", [&](const std::string& k) {
    Reader t = r.child(k);
    TrajectorySpec& tr = cfg.trajectory;
    auto sinusoids = [&](const std::string& key, const char* amp_key) {
      std::vector<Sinusoid> out;
      const json& a = t.at(key);
      if (!a.is_array()) t.fail(key, "expected an array");
      for (size_t i = 0; i < a.size(); ++i) {
        Reader e(a[i], t.name(key) + "[" + std::to_string(i) + "]");
        Sinusoid s;
        s.axis = e.integer<int>("axis");
        s.amplitude = e.number(amp_key);
        s.frequency = e.number("frequency_hz");
        s.phase = e.number("phase_rad");
        e.finish();
        out.push_back(s);
      }
      return out;
    };
    t.optional("center_m", [&](const std::string& f) { tr.center = t.vector<3>(f); });
    t.optional("translation_sinusoids",
               [&](const std::string& f) { tr.translation = sinusoids(f, "amplitude_m"); });
    t.optional("rotation_sinusoids", [&](const std::string& f) { tr.rotation = sinusoids(f, "amplitude_rad"); });
    t.optional("base_rotation_wxyz", [&](const std::string& f) { tr.base_rotation = t.quaternion(f); });
    t.optional("yaw0_rad", [&](const std::string& f) { tr.yaw0 = t.number(f); });
    t.optional("yaw_rad_per_progress", [&](const std::string& f) { tr.yaw_per_unit = t.number(f); });
    t.optional("cycle_phases", [&](const std::string& f) { tr.cycle_phases = t.boolean(f); });
    t.optional("ramp_s", [&](const std::string& f) { tr.ramp = t.number(f); });
    t.optional("phases", [&](const std::string& f) {
      const json& a = t.at(f);
      if (!a.is_array()) t.fail(f, "expected an array");
      tr.phases.clear();
      for (size_t i = 0; i < a.size(); ++i) {
        Reader e(a[i], t.name(f) + "[" + std::to_string(i) + "]");
        MotionPhase p;
        p.duration = e.number("duration_s");
        p.translation_rate = e.number("translation_rate");
        p.rotation_rate = e.number("rotation_rate");
        e.finish();
        tr.phases.push_back(p);
      }
    });
    t.finish();
  });
  r.finish();
  validated("scenario config", [&] {
    cfg.validate();
    return 0;
  });
  return cfg;
}

void write_scenario(const fs::path& path, const ScenarioConfig& cfg) { write_text(path, scenario_to_string(cfg)); }

ScenarioConfig read_scenario(const fs::path& path) {
  try {
    return scenario_from_string(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_imu(const fs::path& path, const std::vector<ImuSample>& imu) {
  std::string text = "# t omega_x omega_y omega_z accel_x accel_y accel_z\n";
  for (const ImuSample& s : imu) {
    text += format_row({s.t, s.omega_meas.x(), s.omega_meas.y(), s.omega_meas.z(), s.accel_meas.x(),
                        s.accel_meas.y(), s.accel_meas.z()});
  }
  write_text(path, text);
}

std::vector<ImuSample> read_imu(const fs::path& path) {
  std::vector<ImuSample> out;
  for_each_row(path, 7, [&](const std::vector<double>& r, int lineno) {
    if (!out.empty() && !(r[0] > out.back().t)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": timestamps must increase");
    }
    out.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  });
  return out;
}

void write_observations(const fs::path& path, const std::vector<FeatureObservation>& obs,
                        const std::vector<KeyframeState>& keyframes) {
  std::string text = "# t keyframe_id landmark_id u v\n";
  char buf[128];
  for (const FeatureObservation& o : obs) {
    if (o.keyframe_id < 0 || o.keyframe_id >= static_cast<int>(keyframes.size())) {
      throw std::invalid_argument("write_observations: keyframe id out of range");
    }
    std::snprintf(buf, sizeof(buf), "%.17g %d %d %.17g %.17g\n", keyframes[o.keyframe_id].t, o.keyframe_id,
                  o.landmark_id, o.uv.x(), o.uv.y());
    text += buf;
  }
  write_text(path, text);
}

std::vector<FeatureObservation> read_observations(const fs::path& path, double sigma) {
  std::vector<FeatureObservation> out;
  for_each_row(path, 5, [&](const std::vector<double>& r, int lineno) {
    FeatureObservation o;
    o.keyframe_id = as_int(r[1], path, lineno);
    o.landmark_id = as_int(r[2], path, lineno);
    o.uv = Vec2(r[3], r[4]);
    o.sigma = sigma;
    out.push_back(o);
  });
  return out;
}

void write_states(const fs::path& path, const std::vector<KeyframeState>& states) {
  std::string text = "# t qw qx qy qz px py pz vx vy vz bgx bgy bgz bax bay baz\n";
  for (const KeyframeState& s : states) {
    text += format_row({s.t, s.q_GI.w(), s.q_GI.x(), s.q_GI.y(), s.q_GI.z(), s.p_GI.x(), s.p_GI.y(), s.p_GI.z(),
                        s.v_GI.x(), s.v_GI.y(), s.v_GI.z(), s.b_g.x(), s.b_g.y(), s.b_g.z(), s.b_a.x(),
                        s.b_a.y(), s.b_a.z()});
  }
  write_text(path, text);
}

std::vector<KeyframeState> read_states(const fs::path& path) {
  std::vector<KeyframeState> out;
  for_each_row(path, 17, [&](const std::vector<double>& r, int lineno) {
    const KeyframeState s = state_from_row(r.data());
    if (std::abs(s.q_GI.norm() - 1.0) > 1e-9) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": quaternion is not unit length");
    }
    if (!out.empty() && !(s.t > out.back().t)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": timestamps must increase");
    }
    out.push_back(s);
  });
  return out;
}

void write_landmarks(const fs::path& path, const std::vector<Landmark>& landmarks) {
  std::string text = "# id x y z\n";
  for (const Landmark& l : landmarks) text += format_ints_then({l.id}, {l.l_G.x(), l.l_G.y(), l.l_G.z()});
  write_text(path, text);
}

std::vector<Landmark> read_landmarks(const fs::path& path) {
  std::vector<Landmark> out;
  std::set<int> ids;
  for_each_row(path, 4, [&](const std::vector<double>& r, int lineno) {
    const int id = as_int(r[0], path, lineno);
    if (!ids.insert(id).second) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": duplicate landmark id");
    }
    out.push_back({id, Vec3(r[1], r[2], r[3])});
  });
  return out;
}

SessionData DatasetBundle::session_data(int session_id) const {
  return {session_id, init_keyframes, init_landmarks, observations, imu};
}

std::vector<std::string> bundle_files() {
  return {"scenario.json",       "imu.txt",         "observations.txt",  "ground_truth.txt",
          "landmarks_truth.txt", "init_states.txt", "init_landmarks.txt"};
}

void write_bundle(const fs::path& dir, const SimulatedSession& s) {
  fs::create_directories(dir);
  write_scenario(dir / "scenario.json", s.config);
  write_imu(dir / "imu.txt", s.imu);
  write_observations(dir / "observations.txt", s.observations, s.truth_keyframes);
  write_states(dir / "ground_truth.txt", s.truth_keyframes);
  write_landmarks(dir / "landmarks_truth.txt", s.truth_landmarks);
  write_states(dir / "init_states.txt", s.init_keyframes);
  write_landmarks(dir / "init_landmarks.txt", s.init_landmarks);
}

DatasetBundle read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("not a bundle directory: " + dir.string());
  DatasetBundle b;
  b.config = read_scenario(dir / "scenario.json");
  b.imu = read_imu(dir / "imu.txt");
  b.observations = read_observations(dir / "observations.txt", b.config.noise.sigma_c);
  b.truth_keyframes = read_states(dir / "ground_truth.txt");
  b.truth_landmarks = read_landmarks(dir / "landmarks_truth.txt");
  b.init_keyframes = read_states(dir / "init_states.txt");
  b.init_landmarks = read_landmarks(dir / "init_landmarks.txt");

  auto fail = [&](const std::string& msg) { throw FormatError(dir.string() + ": " + msg); };
  const size_t K = b.truth_keyframes.size();
  if (K < 2) fail("fewer than 2 keyframes");
  if (b.init_keyframes.size() != K) fail("init_states.txt and ground_truth.txt differ in length");
  for (size_t k = 0; k < K; ++k) {
    if (b.init_keyframes[k].t != b.truth_keyframes[k].t) fail("keyframe timestamps differ between state files");
  }
  if (b.imu.empty() || b.imu.front().t > b.truth_keyframes.front().t ||
      b.imu.back().t < b.truth_keyframes.back().t) {
    fail("imu.txt does not cover the keyframe time span");
  }
  if (b.init_landmarks.size() != b.truth_landmarks.size()) fail("landmark files differ in length");
  std::set<int> ids;
  for (size_t i = 0; i < b.init_landmarks.size(); ++i) {
    if (b.init_landmarks[i].id != b.truth_landmarks[i].id) fail("landmark ids differ between files");
    ids.insert(b.init_landmarks[i].id);
  }
  // Observation timestamps are checked against the text the states were read from.
  std::vector<double> obs_t;
  for_each_row(dir / "observations.txt", 5, [&](const std::vector<double>& r, int) { obs_t.push_back(r[0]); });
  for (size_t i = 0; i < b.observations.size(); ++i) {
    const FeatureObservation& o = b.observations[i];
    if (o.keyframe_id < 0 || o.keyframe_id >= static_cast<int>(K)) {
      fail("observation " + std::to_string(i) + " refers to unknown keyframe " + std::to_string(o.keyframe_id));
    }
    if (obs_t[i] != b.truth_keyframes[o.keyframe_id].t) {
      fail("observation " + std::to_string(i) + " timestamp does not match its keyframe");
    }
    if (!ids.contains(o.landmark_id)) {
      fail("observation " + std::to_string(i) + " refers to unknown landmark " + std::to_string(o.landmark_id));
    }
  }
  return b;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest initialization failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

void write_manifest(const fs::path& root, std::uint64_t seed, const std::vector<fs::path>& files) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = seed;
  json sums = json::object();
  for (const fs::path& f : files) {
    const fs::path full = f.is_absolute() ? f : root / f;
    sums[fs::relative(full, root).generic_string()] = sha256_file(full);
  }
  j["sha256"] = sums;
  write_text(root / "manifest.json", j.dump(2) + "\n");
}

void write_database(const fs::path& path, const SegmentDatabase& db) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["capacity"] = db.capacity;
  j["selection"] = std::string(selection_name(db.selection));
  if (db.normalization) j["normalization"] = normalization_json(*db.normalization);
  json entries = json::array();
  for (const MotionSegment& s : db.entries) {
    json e;
    e["id"] = s.id;
    e["session_id"] = s.session_id;
    e["first_keyframe"] = s.first_keyframe;
    e["metric_value"] = number_or_null(s.metric_value);
    e["score"] = {{"a_opt", number_or_null(s.score.a_opt)},
                  {"d_opt", number_or_null(s.score.d_opt)},
                  {"e_opt", number_or_null(s.score.e_opt)},
                  {"entropy", number_or_null(s.score.entropy)},
                  {"rank_deficient", s.score.rank_deficient}};
    e["keyframes"] = states_json(s.keyframes);
    json imu = json::array();
    for (const ImuSample& m : s.imu_samples) {
      imu.push_back({m.t, m.omega_meas.x(), m.omega_meas.y(), m.omega_meas.z(), m.accel_meas.x(),
                     m.accel_meas.y(), m.accel_meas.z()});
    }
    e["imu"] = imu;
    json obs = json::array();
    for (const FeatureObservation& o : s.observations) {
      obs.push_back({o.keyframe_id, o.landmark_id, o.uv.x(), o.uv.y(), o.sigma});
    }
    e["observations"] = obs;
    json lms = json::array();
    for (const Landmark& l : s.landmarks) lms.push_back({l.id, l.l_G.x(), l.l_G.y(), l.l_G.z()});
    e["landmarks"] = lms;
    entries.push_back(e);
  }
  j["entries"] = entries;
  write_text(path, j.dump() + "\n");
}

SegmentDatabase read_database(const fs::path& path) {
  const std::string where = path.string();
  const json j = parse_json(read_text(path), where);
  try {
    Reader r(j, "");
    SegmentDatabase db;
    if (r.integer<int>("schema_version") != kSchemaVersion) r.fail("schema_version", "unsupported version");
    db.capacity = r.integer<int>("capacity");
    if (db.capacity < 1) r.fail("capacity", "must be at least 1");
    try {
      db.selection = parse_selection(r.string("selection"));
    } catch (const std::invalid_argument& e) {
      r.fail("selection", e.what());
    }
    if (r.has("normalization")) db.normalization = read_normalization(r.child("normalization"));
    const json& entries = r.at("entries");
    if (!entries.is_array()) r.fail("entries", "expected an array");
    for (size_t i = 0; i < entries.size(); ++i) {
      const std::string name = "entries[" + std::to_string(i) + "]";
      Reader e(entries[i], name);
      MotionSegment s;
      s.id = e.integer<int>("id");
      s.session_id = e.integer<int>("session_id");
      s.first_keyframe = e.integer<int>("first_keyframe");
      s.metric_value = number_or_inf(e.at("metric_value"));
      Reader sc = e.child("score");
      s.score.a_opt = number_or_inf(sc.at("a_opt"));
      s.score.d_opt = number_or_inf(sc.at("d_opt"));
      s.score.e_opt = number_or_inf(sc.at("e_opt"));
      s.score.entropy = number_or_inf(sc.at("entropy"));
      s.score.rank_deficient = sc.boolean("rank_deficient");
      sc.finish();
      for (const auto& row : e.at("keyframes")) s.keyframes.push_back(state_from_row(numbers(row, 17, name).data()));
      for (const auto& row : e.at("imu")) {
        const auto v = numbers(row, 7, name);
        s.imu_samples.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])});
      }
      for (const auto& row : e.at("observations")) {
        const auto v = numbers(row, 5, name);
        FeatureObservation o;
        o.keyframe_id = static_cast<int>(v[0]);
        o.landmark_id = static_cast<int>(v[1]);
        o.uv = Vec2(v[2], v[3]);
        o.sigma = v[4];
        s.observations.push_back(o);
      }
      for (const auto& row : e.at("landmarks")) {
        const auto v = numbers(row, 4, name);
        s.landmarks.push_back({static_cast<int>(v[0]), Vec3(v[1], v[2], v[3])});
      }
      e.finish();
      if (s.keyframes.size() < 2) e.fail("keyframes", "a segment needs at least 2 keyframes");
      db.entries.push_back(std::move(s));
    }
    r.finish();
    if (static_cast<int>(db.entries.size()) > db.capacity) r.fail("entries", "more entries than capacity");
    for (size_t i = 1; i < db.entries.size(); ++i) {
      if (db.entries[i].metric_value < db.entries[i - 1].metric_value) r.fail("entries", "not sorted by metric");
    }
    return db;
  } catch (const FormatError& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

}  // namespace infocalib::io
