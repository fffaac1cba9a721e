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

// Command-line driver: simulate datasets, calibrate, evaluate and sweep.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "infocalib/eval.hpp"
#include "infocalib/io.hpp"

namespace fs = std::filesystem;
using namespace infocalib;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kInsufficient = 3, kSolverFailure = 4 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 1;
  bool seed_given = false;
  int threads = 0;
};

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw std::logic_error("table row width");
    rows_.push_back(std::move(row));
  }
  void write(std::ostream& out) const {
    auto line = [&](const std::vector<std::string>& r) {
      for (size_t i = 0; i < r.size(); ++i) out << (i ? "\t" : "") << r[i];
      out << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }
  void save(const std::string& path) const {
    if (path.empty()) return;
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw io::FormatError("cannot write " + path);
    write(out);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Relative config paths fall back to INFOCALIB_CONFIG_DIR.
fs::path resolve_config(const std::string& name) {
  const fs::path p(name);
  if (fs::exists(p)) return p;
  if (const char* dir = std::getenv("INFOCALIB_CONFIG_DIR"); dir != nullptr && p.is_relative()) {
    for (const fs::path& c : {fs::path(dir) / p, fs::path(dir) / (name + ".json")}) {
      if (fs::exists(c)) return c;
    }
  }
  throw UsageError("config not found: " + name);
}

ScenarioConfig preset_or_file(const std::string& name) {
  if (const char* dir = std::getenv("INFOCALIB_CONFIG_DIR"); dir != nullptr) {
    const fs::path c = fs::path(dir) / (name + ".json");
    if (fs::exists(c)) return io::read_scenario(c);
  }
  try {
    return preset_config(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "1-15", "1,2,8" or a mix of both.
std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const std::string& part : split(s, ',')) {
    const auto dash = part.find('-', 1);
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoi(part));
      } else {
        const int a = std::stoi(part.substr(0, dash));
        const int b = std::stoi(part.substr(dash + 1));
        if (b < a) throw UsageError("empty range: " + part);
        for (int i = a; i <= b; ++i) out.push_back(i);
      }
    } catch (const std::logic_error&) {
      throw UsageError("not an integer list: " + s);
    }
  }
  if (out.empty()) throw UsageError("empty list: " + s);
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<io::DatasetBundle> read_bundles(const std::vector<std::string>& dirs) {
  if (dirs.empty()) throw UsageError("no bundles given");
  std::vector<io::DatasetBundle> out;
  for (const auto& d : dirs) out.push_back(io::read_bundle(d));
  return out;
}

// Initial calibration: a calibration file, or the nominal values with the
// noise model of the first bundle.
io::CalibrationFile initial_calibration(const std::string& path, const io::DatasetBundle& first) {
  if (!path.empty()) return io::read_calibration(resolve_config(path));
  io::CalibrationFile f;
  f.calibration = nominal_calibration();
  f.noise = first.config.noise;
  return f;
}

int keyframes_per_segment(double seconds, const io::DatasetBundle& b) {
  const int n = static_cast<int>(std::lround(seconds * b.config.camera_rate));
  if (n < 2) throw UsageError("--seg-seconds gives fewer than 2 keyframes per segment");
  return n;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset = "arvr";
  std::string config;
  int sessions = 1;
  std::optional<double> duration;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g) {
  if (a.sessions < 1) throw UsageError("--sessions must be at least 1");
  const std::vector<std::string> presets = split(a.preset, ',');
  if (presets.empty() && a.config.empty()) throw UsageError("--preset is empty");
  std::vector<fs::path> files;
  const fs::path root(a.out);
  for (int i = 0; i < a.sessions; ++i) {
    ScenarioConfig base = a.config.empty()
                              ? preset_or_file(presets[std::min<size_t>(i, presets.size() - 1)])
                              : io::read_scenario(resolve_config(a.config));
    if (a.config.empty() || g.seed_given) base.seed = g.seed;
    if (a.duration) base.duration = *a.duration;
    try {
      base.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("invalid config: ") + e.what());
    }
    const ScenarioConfig cfg = session_config(base, i);
    SimulatedSession s;
    try {
      s = simulate(cfg);
    } catch (const std::runtime_error& e) {
      throw UsageError(std::string("config does not produce a usable session: ") + e.what());
    }
    char name[32];
    std::snprintf(name, sizeof(name), "session_%02d", i);
    io::write_bundle(root / name, s);
    for (const auto& f : io::bundle_files()) files.push_back(fs::path(name) / f);
    std::cout << name << "\t" << cfg.name << "\t" << s.truth_keyframes.size() << " keyframes\t"
              << s.observations.size() << " observations\n";
  }
  io::write_manifest(root, g.seed, files);
  return kOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::vector<std::string> bundles;
  std::string calib_in;
  std::string mode = "segments";
  std::string metric = "a";
  int capacity = 8;
  double seg_seconds = 4.0;
  std::string strategy = "single";
  bool eager = false;
  std::string db_in;
  std::string db_out;
  std::string calib_out;
  std::string report_out;
  std::string solver_report_out;
  int max_iters = 50;
};

int cmd_calibrate(const CalibrateArgs& a, const Globals& g) {
  if (a.mode != "batch" && a.mode != "segments") throw UsageError("--mode must be batch or segments");
  const auto bundles = read_bundles(a.bundles);
  io::CalibrationFile calib = initial_calibration(a.calib_in, bundles.front());
  SolverOptions solver;
  solver.max_iters = a.max_iters;

  Table solver_table({"session", "mode", "calibrated", "insufficient_data", "iterations", "initial_cost",
                      "final_cost", "converged", "termination"});
  Table segment_table({"session", "segment_id", "first_keyframe", "t_start_s", "t_end_s", "scored", "a_opt", "d_opt",
                       "e_opt", "entropy_nats", "metric_value", "calibration_rank", "outcome", "retained"});
  bool any_calibrated = false;
  bool solver_failed = false;
  std::string solver_message;

  if (a.mode == "batch") {
    for (size_t i = 0; i < bundles.size(); ++i) {
      const SessionData d = bundles[i].session_data(static_cast<int>(i));
      CalibrationProblem p =
          build_batch_problem(d.keyframes, d.landmarks, d.observations, d.imu, calib.calibration, calib.noise);
      try {
        const SolverReport r = solve(p, solver);
        calib.calibration = p.calibration;
        any_calibrated = true;
        calib.provenance.sessions.push_back(static_cast<int>(i));
        solver_table.add({std::to_string(i), "batch", "1", "0", std::to_string(r.iterations), fmt(r.initial_cost),
                          fmt(r.final_cost), r.converged ? "1" : "0", r.termination});
      } catch (const SolverError& e) {
        solver_failed = true;
        solver_message = e.what();
        solver_table.add({std::to_string(i), "batch", "0", "0", "0", "nan", "nan", "0", e.what()});
        break;
      }
    }
  } else {
    SessionOptions opts;
    opts.strategy = parse_strategy(a.strategy);
    opts.eager = a.eager;
    opts.seed = g.seed;
    opts.solver = solver;
    opts.segment_keyframes = keyframes_per_segment(a.seg_seconds, bundles.front());
    SegmentDatabase db;
    db.capacity = a.capacity;
    db.selection = parse_selection(a.metric);
    int first_session = 0;
    if (!a.db_in.empty()) {
      db = io::read_database(a.db_in);
      if (db.capacity != a.capacity || db.selection != parse_selection(a.metric)) {
        throw UsageError("--capacity/--metric differ from the database in " + a.db_in);
      }
      for (const auto& s : db.entries) first_session = std::max(first_session, s.session_id + 1);
    }
    if (db.capacity < 1) throw UsageError("--capacity must be at least 1");
    for (size_t i = 0; i < bundles.size(); ++i) {
      const int session = first_session + static_cast<int>(i);
      SessionResult r;
      try {
        r = run_session(bundles[i].session_data(session), calib.calibration, db, calib.noise,
                        calib.normalization, opts);
      } catch (const SolverError& e) {
        solver_failed = true;
        solver_message = e.what();
        solver_table.add({std::to_string(session), "segments", "0", "0", "0", "nan", "nan", "0", e.what()});
        break;
      }
      const std::set<int> retained(r.report.retained_ids.begin(), r.report.retained_ids.end());
      for (const SegmentRecord& s : r.report.segments) {
        segment_table.add({std::to_string(session), std::to_string(s.segment_id), std::to_string(s.first_keyframe),
                           fmt(s.t_start), fmt(s.t_end), s.scored ? "1" : "0", fmt(s.score.a_opt),
                           fmt(s.score.d_opt), fmt(s.score.e_opt), fmt(s.score.entropy), fmt(s.metric_value),
                           std::to_string(s.calibration_rank), std::string(outcome_name(s.outcome)),
                           retained.contains(s.segment_id) ? "1" : "0"});
      }
      const SolverReport& sr = r.report.solver;
      solver_table.add({std::to_string(session), "segments", r.report.calibrated ? "1" : "0",
                        r.report.insufficient_data ? "1" : "0", std::to_string(sr.iterations),
                        fmt(sr.initial_cost), fmt(sr.final_cost), sr.converged ? "1" : "0",
                        r.report.calibrated ? sr.termination : "database not full"});
      if (r.report.calibrated) {
        calib.calibration = r.calibration;
        any_calibrated = true;
        calib.provenance.sessions.push_back(session);
      }
      std::cout << "session " << session << ": " << r.report.segments.size() << " segments offered, "
                << db.entries.size() << "/" << db.capacity << " retained"
                << (r.report.calibrated ? ", calibrated\n" : ", database not full\n");
    }
    if (!db.normalization && db.selection != Selection::kRandom) db.normalization = calib.normalization;
    if (!a.db_out.empty()) io::write_database(a.db_out, db);
    calib.provenance.metric = a.metric;
  }
  segment_table.save(a.report_out);
  solver_table.save(a.solver_report_out);
  if (solver_failed) {
    std::cerr << "solver failure: " << solver_message << "\n";
    return kSolverFailure;
  }
  if (!any_calibrated) throw InsufficientData("not enough informative segments to fill the database");
  calib.provenance.mode = a.mode;
  calib.provenance.created = io::utc_timestamp();
  if (!a.calib_out.empty()) io::write_calibration(a.calib_out, calib);
  const auto& c = calib.calibration;
  std::cout << "f = " << fmt(c.camera.focal.x()) << " " << fmt(c.camera.focal.y()) << " px, c = "
            << fmt(c.camera.principal_point.x()) << " " << fmt(c.camera.principal_point.y()) << " px, w = "
            << fmt(c.camera.distortion) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string calib;
  std::vector<std::string> bundles;
  double window = 10.0;
  std::string report_out;
};

struct EvalRow {
  double translation;
  double rotation;
  int windows;
  int failed;
};

EvalRow evaluate_bundle(const io::DatasetBundle& b, const CalibrationState& c, const NoiseModel& noise,
                        double window) {
  EvaluationOptions opts;
  opts.window_seconds = window;
  const TrajectoryEvaluation e = evaluate_trajectory(b.session_data(0), b.truth_keyframes, c, noise, opts);
  return {e.rmse.translation_rmse, e.rmse.rotation_rmse, e.windows, e.failed_windows};
}

int cmd_evaluate(const EvaluateArgs& a) {
  if (a.bundles.empty()) throw UsageError("evaluate needs at least one --bundle");
  if (!(a.window > 0.0)) throw UsageError("--window must be positive");
  const io::CalibrationFile calib = io::read_calibration(resolve_config(a.calib));
  Table t({"dataset", "translation_rmse_m", "rotation_rmse_deg", "windows", "failed_windows"});
  std::vector<double> tr;
  std::vector<double> rot;
  for (const auto& dir : a.bundles) {
    const io::DatasetBundle b = io::read_bundle(dir);
    const EvalRow r = evaluate_bundle(b, calib.calibration, calib.noise, a.window);
    tr.push_back(r.translation);
    rot.push_back(r.rotation);
    t.add({dir, fmt(r.translation), fmt(r.rotation), std::to_string(r.windows), std::to_string(r.failed)});
  }
  t.add({"median", fmt(median(tr)), fmt(median(rot)), "", ""});
  t.add({"std", fmt(sample_std(tr)), fmt(sample_std(rot)), "", ""});
  t.write(std::cout);
  t.save(a.report_out);
  return kOk;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::vector<std::string> bundles;
  std::vector<std::string> eval_bundles;
  std::string capacities = "1-15";
  std::string metrics = "a,d,e,random";
  std::string seeds;
  double seg_seconds = 4.0;
  std::string calib_in;
  double window = 10.0;
  int max_iters = 50;
  std::string report_out;
};

int cmd_sweep(const SweepArgs& a, const Globals& g) {
  const auto bundles = read_bundles(a.bundles);
  const auto eval_bundles = a.eval_bundles.empty() ? bundles : read_bundles(a.eval_bundles);
  const std::vector<int> capacities = parse_int_list(a.capacities);
  for (int c : capacities) {
    if (c < 1) throw UsageError("capacities must be at least 1");
  }
  std::vector<Selection> selections;
  for (const auto& m : split(a.metrics, ',')) {
    try {
      selections.push_back(parse_selection(m));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (selections.empty()) throw UsageError("--metrics is empty");
  std::vector<std::uint64_t> seeds;
  if (a.seeds.empty()) {
    seeds.push_back(g.seed);
  } else {
    for (int s : parse_int_list(a.seeds)) seeds.push_back(static_cast<std::uint64_t>(s));
  }
  const io::CalibrationFile start = initial_calibration(a.calib_in, bundles.front());

  std::vector<std::string> header = {"bundle", "metric", "capacity", "seed", "calibrated", "translation_rmse_m",
                                     "rotation_rmse_deg"};
  for (auto n : calibration_parameter_names()) header.push_back("error_" + std::string(n));
  Table t(header);

  for (size_t bi = 0; bi < bundles.size(); ++bi) {
    const io::DatasetBundle& b = bundles[bi];
    SessionOptions opts;
    opts.segment_keyframes = keyframes_per_segment(a.seg_seconds, b);
    opts.solver.max_iters = a.max_iters;
    const SessionData data = b.session_data(0);
    for (Selection sel : selections) {
      // Deterministic metrics do not depend on the seed; their runs are shared.
      std::map<int, std::vector<std::string>> shared;
      for (std::uint64_t seed : seeds) {
        opts.seed = seed;
        std::optional<ScoredSession> scored;
        for (int capacity : capacities) {
          std::vector<std::string> row = {a.bundles[bi], std::string(selection_name(sel)), std::to_string(capacity),
                                          std::to_string(seed)};
          if (sel != Selection::kRandom && shared.contains(capacity)) {
            const auto& s = shared.at(capacity);
            row.insert(row.end(), s.begin(), s.end());
            t.add(row);
            continue;
          }
          if (!scored) scored = score_session(data, start.calibration, sel, start.noise, start.normalization, opts);
          SegmentDatabase db;
          db.capacity = capacity;
          db.selection = sel;
          std::vector<std::string> result;
          try {
            const SessionResult r = select_and_calibrate(*scored, start.calibration, db, start.noise, opts);
            std::vector<double> tr;
            std::vector<double> rot;
            for (const auto& e : eval_bundles) {
              const EvalRow er = evaluate_bundle(e, r.calibration, start.noise, a.window);
              tr.push_back(er.translation);
              rot.push_back(er.rotation);
            }
            result = {r.report.calibrated ? "1" : "0", fmt(median(tr)), fmt(median(rot))};
            const Vec26 err = calibration_error(r.calibration, b.config.calibration);
            for (int i = 0; i < kCalibDim; ++i) result.push_back(fmt(err(i)));
          } catch (const SolverError&) {
            result = {"0", "nan", "nan"};
            for (int i = 0; i < kCalibDim; ++i) result.push_back("nan");
          }
          if (sel != Selection::kRandom) shared[capacity] = result;
          row.insert(row.end(), result.begin(), result.end());
          t.add(row);
          std::cerr << selection_name(sel) << " capacity " << capacity << " seed " << seed << " done\n";
        }
      }
    }
  }
  t.write(std::cout);
  t.save(a.report_out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information-driven visual-inertial calibration on simulated data"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for simulation and random selection");
  app.add_option("--threads", g.threads, "Worker threads (0: library default)")->check(CLI::NonNegativeNumber);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Write simulated dataset bundles and a manifest");
  sim->add_option("--preset", sa.preset, "Preset name(s) arvr|nav|still, comma separated per session");
  sim->add_option("--config", sa.config, "Scenario config file (overrides --preset)");
  sim->add_option("--sessions", sa.sessions, "Number of sessions");
  sim->add_option("--duration", sa.duration, "Session duration in s");
  sim->add_option("--out", sa.out, "Output directory")->required();

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "Batch or segment-based calibration over bundles in order");
  cal->add_option("--bundle", ca.bundles, "Bundle directory, repeat for several sessions")->required();
  cal->add_option("--calib-in", ca.calib_in, "Initial calibration file (default: nominal values)");
  cal->add_option("--mode", ca.mode, "batch | segments");
  cal->add_option("--metric", ca.metric, "a | d | e | random");
  cal->add_option("--capacity", ca.capacity, "Segment database capacity");
  cal->add_option("--seg-seconds", ca.seg_seconds, "Segment length in s");
  cal->add_option("--strategy", ca.strategy, "single | multi");
  cal->add_flag("--eager", ca.eager, "Calibrate as soon as the database is full");
  cal->add_option("--db-in", ca.db_in, "Segment database to continue from");
  cal->add_option("--db-out", ca.db_out, "Where to store the segment database");
  cal->add_option("--calib-out", ca.calib_out, "Calibration output file");
  cal->add_option("--report-out", ca.report_out, "Per-segment score table (TSV)");
  cal->add_option("--solver-report-out", ca.solver_report_out, "Per-session solver table (TSV)");
  cal->add_option("--max-iters", ca.max_iters, "Solver iteration limit");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Trajectory RMSE of a calibration on evaluation bundles");
  ev->add_option("--calib", ea.calib, "Calibration file")->required();
  ev->add_option("--bundle", ea.bundles, "Evaluation bundle directory, repeatable");
  ev->add_option("--window", ea.window, "Evaluation window in s");
  ev->add_option("--report-out", ea.report_out, "RMSE table (TSV)");

  SweepArgs wa;
  auto* sw = app.add_subcommand("sweep", "Capacity x metric x seed grid of segment calibrations");
  sw->add_option("--bundle", wa.bundles, "Calibration bundle directory, repeatable")->required();
  sw->add_option("--eval-bundle", wa.eval_bundles, "Evaluation bundles (default: the calibration bundles)");
  sw->add_option("--capacities", wa.capacities, "e.g. 1-15 or 1,4,8");
  sw->add_option("--metrics", wa.metrics, "Comma separated a,d,e,random");
  sw->add_option("--seeds", wa.seeds, "e.g. 1-5 (default: --seed)");
  sw->add_option("--seg-seconds", wa.seg_seconds, "Segment length in s");
  sw->add_option("--calib-in", wa.calib_in, "Initial calibration file (default: nominal values)");
  sw->add_option("--window", wa.window, "Evaluation window in s");
  sw->add_option("--max-iters", wa.max_iters, "Solver iteration limit");
  sw->add_option("--report-out", wa.report_out, "Tidy result table (TSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  g.seed_given = seed_opt->count() > 0;
  if (g.threads > 0) set_num_threads(g.threads);

  try {
    if (*sim) return cmd_simulate(sa, g);
    if (*cal) return cmd_calibrate(ca, g);
    if (*ev) return cmd_evaluate(ea);
    if (*sw) return cmd_sweep(wa, g);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const io::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InsufficientData& e) {
    std::cerr << "insufficient data: " << e.what() << "\n";
    return kInsufficient;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  }
  return kUsage;
}
