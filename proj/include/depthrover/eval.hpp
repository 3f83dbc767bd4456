#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "depthrover/detect.hpp"
#include "depthrover/image.hpp"
#include "depthrover/rover.hpp"

namespace depthrover {

struct DepthBin {
  double center = 0.0;
  double mae = 0.0;  // NaN when the bin is empty
  std::size_t count = 0;
};

struct DepthEvalReport {
  bool empty = true;  // no pixel valid in both maps inside the band
  double mae = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double valid_fraction = 0.0;  // of ground-truth pixels inside the band
  std::pair<double, double> band{0.15, 2.0};
  std::vector<DepthBin> bins;
  std::size_t count = 0;
};

/// Accumulates |estimate - gt| over pixels whose ground truth lies in the
/// closed band [min, max]; bins are 0.25 m wide starting at `min`.
class DepthErrorAccumulator {
 public:
  explicit DepthErrorAccumulator(std::pair<double, double> band = {0.15, 2.0},
                                 double bin_width = 0.25);
  void add(const DepthMap& estimate, const DepthMap& gt);
  DepthEvalReport report() const;

 private:
  std::pair<double, double> band_;
  double bin_width_;
  std::size_t in_band_ = 0;
  std::size_t count_ = 0;
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  std::vector<double> bin_sum_;
  std::vector<std::size_t> bin_count_;
};

DepthEvalReport depth_mae(const DepthMap& estimate, const DepthMap& gt,
                          std::pair<double, double> band = {0.15, 2.0});

nlohmann::json to_json(const DepthEvalReport& r);

struct NavReport {
  bool completion = false;
  double time_s = 0.0;
  double path_deviation = 0.0;  // mean point-to-polyline distance
  int halt_count = 0;

  bool operator==(const NavReport&) const = default;
};

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b);
double point_polyline_distance(const Eigen::Vector2d& p,
                               const std::vector<Eigen::Vector2d>& polyline);

NavReport nav_metrics(const ExecutionReport& report, const std::vector<Eigen::Vector2d>& intended);

nlohmann::json to_json(const NavReport& r);

struct Telemetry {
  double timestamp = 0.0;
  double cpu_load = 0.0;  // [0, 1]
  double memory_mb = 0.0;
  double synthetic_temp_c = 40.0;
};

/// Telemetry with a temperature random walk clipped to `temp_band`. With
/// `synthetic_load` the CPU and memory fields are seeded signals too, so a
/// run is reproducible; otherwise they are read from /proc.
class TelemetrySource {
 public:
  TelemetrySource(std::uint64_t seed, bool synthetic_load,
                  std::pair<double, double> temp_band = {40.0, 65.0});
  Telemetry sample(double t);

 private:
  std::mt19937_64 rng_;
  bool synthetic_load_;
  std::pair<double, double> band_;
  double temp_;
  double load_;
};

nlohmann::json to_json(const Telemetry& t);

enum class RecordKind { rgb, depth, detections, telemetry, pose };
std::string to_string(RecordKind kind);

/// Append-only run directory: index.json, rgb/*.png, depth/*.pfm and
/// events.jsonl. Safe to call from several producers; timestamps must be
/// non-decreasing per kind.
class SessionLogger {
 public:
  SessionLogger(const std::filesystem::path& runs_root, std::string run_id,
                nlohmann::json metadata = nlohmann::json::object());
  ~SessionLogger();
  SessionLogger(const SessionLogger&) = delete;
  SessionLogger& operator=(const SessionLogger&) = delete;

  void log_rgb(double t, const GrayImage& image);
  /// Estimate and optional ground truth, both in meters.
  void log_depth(double t, const DepthMap& estimate, const std::optional<DepthMap>& gt,
                 double capture_t);
  void log_detections(double t, std::uint64_t seq, const std::vector<Detection>& detections);
  void log_telemetry(const Telemetry& telemetry);
  void log_pose(double t, const RoverState& state);

  /// Merges `extra` into the index metadata and rewrites index.json.
  void finalize(const nlohmann::json& extra = nlohmann::json::object());

  const std::filesystem::path& directory() const { return dir_; }
  std::size_t record_count() const;

 private:
  void append(RecordKind kind, double t, nlohmann::json line, std::optional<std::string> ref);
  void write_index() const;

  std::filesystem::path dir_;
  std::string run_id_;
  nlohmann::json metadata_;
  mutable std::mutex mutex_;
  std::ofstream events_;
  std::vector<nlohmann::json> records_;
  std::vector<double> last_t_;
  std::size_t image_seq_ = 0;
  std::size_t depth_seq_ = 0;
  bool finalized_ = false;
};

/// Everything `eval` needs, read back from a run directory.
struct ReplayedRun {
  nlohmann::json index;
  ExecutionReport execution;
  std::vector<Eigen::Vector2d> intended;
  std::vector<std::pair<DepthMap, DepthMap>> depth_pairs;  // (estimate, gt), meters
  std::size_t detection_records = 0;
};

ReplayedRun load_session(const std::filesystem::path& run_dir);

/// {"depth": DepthEvalReport, "nav": NavReport}
nlohmann::json evaluate_run(const std::filesystem::path& run_dir,
                            std::pair<double, double> band = {0.15, 2.0});

}  // namespace depthrover
