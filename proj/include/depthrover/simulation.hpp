#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "depthrover/config.hpp"
#include "depthrover/eval.hpp"
#include "depthrover/rover.hpp"
#include "depthrover/scene.hpp"

namespace depthrover {

/// Left-camera pose of a rover standing at `state` on the terrain.
RigPose camera_pose(const SceneDescription& scene, const MountConfig& mount,
                    const RoverState& state);

/// Near-field obstacle proxy: ground-truth depth (meters) kept only where
/// the hit point rises more than `min_height_m` above the terrain below it.
DepthMap obstacle_proxy(const SceneDescription& scene, const StereoFrame& frame,
                        const CameraIntrinsics& intrinsics, double units_per_meter,
                        double min_height_m);

/// Latest slow-channel output with its ground truth, both in meters.
struct DepthCapture {
  MonoDepthResult estimate;
  DepthMap gt;
};

/// Rendered world around a rover: the fast channel re-renders ground truth at
/// detection resolution, the slow channel renders the left camera and runs
/// the configured monocular backend.
class SimulatedWorld final : public RoverWorld {
 public:
  SimulatedWorld(SceneDescription scene, const AppConfig& config,
                 const BackendRegistry& registry = BackendRegistry::with_defaults());

  std::vector<Detection> detect(double t) override;
  std::function<MonoDepthResult()> capture_depth(double t) override;
  void set_rover_state(const RoverState& state) override;
  int detection_image_width() const override { return detection_intrinsics_.width_px; }

  RoverState rover_state() const;
  /// Left camera image at detection resolution for the current pose.
  GrayImage render_view(double t) const;
  std::optional<DepthCapture> last_capture() const;

  /// Called from the slow channel with each captured left image.
  std::function<void(double, const GrayImage&)> on_capture;

  const SceneDescription& scene() const { return scene_; }
  const CameraIntrinsics& detection_intrinsics() const { return detection_intrinsics_; }

 private:
  SceneDescription scene_;
  MountConfig mount_;
  DetectorConfig detector_;
  MonoDepthConfig monodepth_;
  std::shared_ptr<const MonoDepthBackend> backend_;
  double units_per_meter_;
  CameraIntrinsics detection_intrinsics_;
  CameraIntrinsics depth_intrinsics_;

  mutable std::mutex mutex_;
  RoverState state_;
  std::optional<DepthCapture> last_;
};

RoverState initial_state(const MountConfig& mount);

/// Straight drive across the boulder region used when no plan is given.
PathPlan default_plan(const AppConfig& config);

struct SimulationResult {
  std::filesystem::path run_dir;
  ExecutionReport execution;
  NavReport nav;
  TickTrace trace;
};

/// Headless run: builds the scene, executes `plan` and logs the session to
/// runs_root/run_id. Under the simulated clock the log is deterministic.
SimulationResult run_simulation(const AppConfig& config, const PathPlan& plan,
                                const std::filesystem::path& runs_root, const std::string& run_id);

}  // namespace depthrover
