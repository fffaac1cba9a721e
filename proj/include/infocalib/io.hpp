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

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "infocalib/metrics.hpp"
#include "infocalib/segdb.hpp"
#include "infocalib/sim.hpp"

namespace infocalib::io {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

/// Malformed or missing input; the message names the file and field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Provenance {
  std::vector<int> sessions;
  std::string mode;    // "batch", "segments" or empty
  std::string metric;  // selection name or empty
  std::string created;  // UTC, ISO 8601
};

struct CalibrationFile {
  int schema_version = kSchemaVersion;
  CalibrationState calibration;
  NoiseModel noise;
  std::optional<MetricNormalization> normalization;
  Provenance provenance;
};

std::string utc_timestamp();

// Structured documents. Doubles are written with round-trip precision, so
// read(write(x)) reproduces x bit for bit.
std::string calibration_to_string(const CalibrationFile& f);
CalibrationFile calibration_from_string(const std::string& text);
void write_calibration(const fs::path& path, const CalibrationFile& f);
CalibrationFile read_calibration(const fs::path& path);

/// Keys missing from the document keep the values of the preset named by its
/// "preset" key, otherwise of a default ScenarioConfig. Unknown keys are
/// rejected and the result is validated.
std::string scenario_to_string(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_string(const std::string& text);
void write_scenario(const fs::path& path, const ScenarioConfig& cfg);
ScenarioConfig read_scenario(const fs::path& path);

// Line-oriented measurement and state files. Lines starting with '#' are
// comments.
void write_imu(const fs::path& path, const std::vector<ImuSample>& imu);
std::vector<ImuSample> read_imu(const fs::path& path);
/// `t keyframe_id landmark_id u v`; t is the keyframe time.
void write_observations(const fs::path& path, const std::vector<FeatureObservation>& obs,
                        const std::vector<KeyframeState>& keyframes);
/// Observations get `sigma` as their pixel standard deviation.
std::vector<FeatureObservation> read_observations(const fs::path& path, double sigma);
void write_states(const fs::path& path, const std::vector<KeyframeState>& states);
std::vector<KeyframeState> read_states(const fs::path& path);
void write_landmarks(const fs::path& path, const std::vector<Landmark>& landmarks);
std::vector<Landmark> read_landmarks(const fs::path& path);

/// One simulated session on disk.
struct DatasetBundle {
  ScenarioConfig config;  // includes the true calibration and noise model
  std::vector<ImuSample> imu;
  std::vector<FeatureObservation> observations;
  std::vector<KeyframeState> truth_keyframes;
  std::vector<Landmark> truth_landmarks;
  std::vector<KeyframeState> init_keyframes;
  std::vector<Landmark> init_landmarks;

  SessionData session_data(int session_id) const;
};

/// File names inside a bundle directory.
std::vector<std::string> bundle_files();

/// Writes the bundle files into `dir`, creating it.
void write_bundle(const fs::path& dir, const SimulatedSession& session);
/// Reads and cross-checks timestamps and ids across the files.
DatasetBundle read_bundle(const fs::path& dir);

std::string sha256_file(const fs::path& path);

/// manifest.json in `root`: seed plus the SHA-256 of every listed file,
/// keyed by path relative to `root`.
void write_manifest(const fs::path& root, std::uint64_t seed, const std::vector<fs::path>& files);

/// Segment database including the segments' measurements and states.
void write_database(const fs::path& path, const SegmentDatabase& db);
SegmentDatabase read_database(const fs::path& path);

}  // namespace infocalib::io
