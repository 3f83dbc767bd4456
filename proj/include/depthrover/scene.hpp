#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "depthrover/geometry.hpp"
#include "depthrover/image.hpp"

namespace depthrover {

/// Heightmap over the rectangle [-extent.x/2, extent.x/2] x [-extent.y/2,
/// extent.y/2] (world x, y), sampled every `cell_size` units.
struct Terrain {
  Raster<double> heightmap;  // (row = y index, col = x index)
  double cell_size = 1.0;
  std::uint64_t seed = 0;
  Eigen::Vector2d extent = Eigen::Vector2d::Zero();
  double roughness = 0.0;
  double min_height = 0.0;
  double max_height = 0.0;

  bool contains(double x, double y) const;
  /// Bilinear elevation. Clamps to the grid edge outside the extent.
  double height_at(double x, double y) const;
  Eigen::Vector3d normal_at(double x, double y) const;
};

struct Boulder {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d radii = Eigen::Vector3d::Ones();  // axis-aligned semi-axes
  int id = 0;

  bool footprint_contains(double x, double y) const;
};

struct SceneDescription {
  Terrain terrain;
  std::vector<Boulder> boulders;
  Eigen::Vector3d sun_direction = Eigen::Vector3d(0.3, 0.2, 1.0).normalized();
  double albedo = 0.8;
  /// Share of the albedo modulated by the procedural texture, in [0, 1].
  double texture_amplitude = 0.6;
  /// Wavelength of the finest texture octave, scene units.
  double texture_scale = 0.005;
  double ambient = 0.35;

  void validate() const;
};

/// Object ids in the ground-truth label raster.
constexpr int kSkyId = -1;
constexpr int kTerrainId = 0;
/// Boulder k in `SceneDescription::boulders` is labelled k + 1.
constexpr int boulder_label(std::size_t index) { return int(index) + 1; }

struct StereoFrame {
  GrayImage left;
  GrayImage right;
  Raster<double> gt_depth_left;  // optical-axis Z, +inf where nothing is hit
  Raster<int> gt_label_left;     // kSkyId, kTerrainId or boulder_label(k)
  double timestamp = 0.0;
  RigPose rig_pose;

  int width() const { return int(gt_depth_left.cols()); }
  int height() const { return int(gt_depth_left.rows()); }
};

struct RenderOptions {
  /// Per-axis supersampling factor for intensities (depth and labels use
  /// the pixel center).
  int supersample = 2;
  bool render_right = true;
};

struct BoulderRegion {
  Eigen::Vector2d min = Eigen::Vector2d::Constant(-1e300);
  Eigen::Vector2d max = Eigen::Vector2d::Constant(1e300);
  /// Minimum horizontal gap between boulder footprints (scene units).
  double min_gap = 0.0;
};

Terrain generate_terrain(std::uint64_t seed, const Eigen::Vector2d& extent,
                         double cell_size, double roughness);

/// `radius_range` bounds the horizontal semi-axes; the vertical semi-axis is
/// drawn from [0.6, 1.0] of the smaller horizontal one.
std::vector<Boulder> place_boulders(const Terrain& terrain, std::uint64_t seed,
                                    int count, const Eigen::Vector2d& radius_range,
                                    const BoulderRegion& region = {});

/// Nearest hit along a world ray; `t` is the ray parameter (unit direction).
struct Hit {
  double t = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  int label = kSkyId;
};

std::optional<Hit> raycast(const SceneDescription& scene, const Eigen::Vector3d& origin,
                           const Eigen::Vector3d& direction);

/// Grayscale intensity in [0, 1] of a lit surface point.
double shade(const SceneDescription& scene, const Hit& hit);

StereoFrame render_stereo(const SceneDescription& scene, const StereoRig& rig,
                          const RigPose& pose, double timestamp = 0.0,
                          const RenderOptions& options = {});

/// Left-camera depth and labels only; `left` and `right` stay empty.
StereoFrame render_depth(const SceneDescription& scene, const CameraIntrinsics& intrinsics,
                         const RigPose& pose, double timestamp = 0.0);

/// {seed, extent, cell_size, roughness, boulders:[{center, radii}],
///  sun_direction, albedo} plus optional texture keys.
nlohmann::json scene_to_json(const SceneDescription& scene);
SceneDescription scene_from_json(const nlohmann::json& j);

}  // namespace depthrover
