#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "depthrover/detect.hpp"
#include "depthrover/geometry.hpp"
#include "depthrover/monodepth.hpp"
#include "depthrover/pipeline.hpp"
#include "depthrover/rover.hpp"
#include "depthrover/scene.hpp"
#include "depthrover/stereo.hpp"

namespace depthrover {

/// Procedural scene parameters. When `boulders` is set the explicit list is
/// used instead of random placement.
struct SceneConfig {
  std::uint64_t seed = 7;
  Eigen::Vector2d extent{12.0, 12.0};
  double cell_size = 0.1;
  double roughness = 0.05;
  int boulder_count = 6;
  Eigen::Vector2d boulder_radius{0.1, 0.25};
  BoulderRegion boulder_region{{-2.5, -1.5}, {5.0, 1.5}, 0.3};
  std::optional<std::vector<Boulder>> boulders;
  Eigen::Vector3d sun_direction = Eigen::Vector3d(0.3, 0.2, 1.0).normalized();
  double albedo = 0.8;
  double texture_amplitude = 0.6;
  double texture_scale = 0.005;
  double ambient = 0.35;

  SceneDescription build() const;
};

struct RigConfig {
  int width = 500;
  int height = 500;
  double fov_h_deg = 60.0;
  double fov_v_deg = 60.0;
  double baseline = 0.12;
  double units_per_meter = 1.0;

  /// 500x500, 60x60 deg, 24-unit baseline.
  static RigConfig paper_mode(double units_per_meter);
  StereoRig build() const;
};

/// How the cameras ride on the rover and at which resolutions the two
/// perception channels look at the world.
struct MountConfig {
  double camera_height = 0.25;     // scene units above the terrain
  double camera_pitch_deg = -15.0;
  int detection_width = 128;
  int detection_height = 128;
  int depth_width = 128;
  int depth_height = 128;
  double obstacle_min_height = 0.02;  // meters above terrain
  Eigen::Vector3d start{-4.0, 0.0, 0.0};  // x, y, heading

  void validate() const;
};

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  double frame_rate_limit = 10.0;  // Hz
  std::string frame_format = "png";
  std::string paths_dir;

  void validate() const;
};

struct AppConfig {
  SceneConfig scene;
  RigConfig rig;
  SgmParams sgm = default_sgm_params();
  MonoDepthConfig monodepth;
  DetectorConfig detector;
  ScheduleConfig schedule;
  DriveParams drive;
  MountConfig mount;
  SafetyConfig safety;
  ServerConfig server;

  void validate() const;
};

/// Sections {scene, rig, sgm, monodepth, detector, schedule, rover, safety,
/// server}; missing keys keep their defaults, unknown keys are rejected
/// with ConfigError.
AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& config);
AppConfig load_config(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace depthrover
