#include "depthrover/simulation.hpp"

#include <cmath>

#include "depthrover/detect.hpp"
#include "depthrover/geometry.hpp"

namespace depthrover {

RigPose camera_pose(const SceneDescription& scene, const MountConfig& mount,
                    const RoverState& state) {
  RigPose pose;
  const double x = state.position.x(), y = state.position.y();
  pose.position = {x, y, scene.terrain.height_at(x, y) + mount.camera_height};
  pose.yaw = state.heading;
  pose.pitch = deg2rad(mount.camera_pitch_deg);
  return pose;
}

DepthMap obstacle_proxy(const SceneDescription& scene, const StereoFrame& frame,
                        const CameraIntrinsics& intrinsics, double units_per_meter,
                        double min_height_m) {
  const Eigen::Matrix3d r = frame.rig_pose.camera_to_world();
  DepthMap out(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      const double z = frame.gt_depth_left(y, x);
      if (!std::isfinite(z) || !(z > 0)) continue;
      const Eigen::Vector3d dir = pixel_ray(intrinsics, x + 0.5, y + 0.5).direction;
      const Eigen::Vector3d p = frame.rig_pose.position + r * (dir * (z / dir.z()));
      const double rise = (p.z() - scene.terrain.height_at(p.x(), p.y())) / units_per_meter;
      if (rise <= min_height_m) continue;
      out.values(y, x) = z / units_per_meter;
      out.valid(y, x) = true;
    }
  }
  return out;
}

SimulatedWorld::SimulatedWorld(SceneDescription scene, const AppConfig& config,
                               const BackendRegistry& registry)
    : scene_(std::move(scene)), mount_(config.mount), detector_(config.detector),
      monodepth_(config.monodepth), backend_(registry.select(config.monodepth.backend)),
      units_per_meter_(config.rig.units_per_meter),
      detection_intrinsics_(CameraIntrinsics::from_fov(config.mount.detection_width,
                                                       config.mount.detection_height,
                                                       config.rig.fov_h_deg, config.rig.fov_v_deg)),
      depth_intrinsics_(CameraIntrinsics::from_fov(config.mount.depth_width,
                                                   config.mount.depth_height,
                                                   config.rig.fov_h_deg, config.rig.fov_v_deg)),
      state_(initial_state(config.mount)) {
  scene_.validate();
  mount_.validate();
  detector_.validate();
  monodepth_.validate();
}

void SimulatedWorld::set_rover_state(const RoverState& state) {
  std::lock_guard lock(mutex_);
  state_ = state;
}

RoverState SimulatedWorld::rover_state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::optional<DepthCapture> SimulatedWorld::last_capture() const {
  std::lock_guard lock(mutex_);
  return last_;
}

std::vector<Detection> SimulatedWorld::detect(double t) {
  const RigPose pose = camera_pose(scene_, mount_, rover_state());
  const StereoFrame frame = render_depth(scene_, detection_intrinsics_, pose, t);
  const DepthMap proxy = obstacle_proxy(scene_, frame, detection_intrinsics_, units_per_meter_,
                                        mount_.obstacle_min_height);
  return depthrover::detect(proxy, detector_, t);
}

GrayImage SimulatedWorld::render_view(double t) const {
  StereoRig rig;
  rig.intrinsics = detection_intrinsics_;
  rig.baseline = 1.0;
  rig.units_per_meter = units_per_meter_;
  RenderOptions options;
  options.supersample = 1;
  options.render_right = false;
  return render_stereo(scene_, rig, camera_pose(scene_, mount_, rover_state()), t, options).left;
}

std::function<MonoDepthResult()> SimulatedWorld::capture_depth(double t) {
  // The pose is sampled now; the job may run later on another thread.
  const RigPose pose = camera_pose(scene_, mount_, rover_state());
  return [this, pose, t] {
    StereoRig rig;
    rig.intrinsics = depth_intrinsics_;
    rig.baseline = 1.0;
    rig.units_per_meter = units_per_meter_;
    RenderOptions options;
    options.supersample = 1;
    options.render_right = false;
    const StereoFrame frame = render_stereo(scene_, rig, pose, t, options);
    if (on_capture) on_capture(t, frame.left);
    DepthCapture capture{{}, gt_depth_meters(frame, units_per_meter_)};
    capture.estimate = backend_->estimate(monodepth_, frame, capture.gt);
    capture.estimate.capture_timestamp = t;
    {
      std::lock_guard lock(mutex_);
      last_ = capture;
    }
    return capture.estimate;
  };
}

RoverState initial_state(const MountConfig& mount) {
  RoverState s;
  s.position = mount.start.head<2>();
  s.heading = wrap_angle(mount.start.z());
  return s;
}

PathPlan default_plan(const AppConfig& config) {
  const double length = config.scene.boulder_region.max.x() - config.mount.start.x() + 1.0;
  PathPlan plan;
  plan.name = "straight";
  plan.steps.push_back({std::max(0.1, length / config.drive.wheel_speed), {1, 1}});
  return plan;
}

SimulationResult run_simulation(const AppConfig& config, const PathPlan& plan,
                                const std::filesystem::path& runs_root, const std::string& run_id) {
  config.validate();
  plan.validate();
  SimulatedWorld world(config.scene.build(), config);
  const RoverState start = initial_state(config.mount);
  const std::vector<Eigen::Vector2d> intended = plan_polyline(plan, start, config.drive);

  nlohmann::json intended_json = nlohmann::json::array();
  for (const Eigen::Vector2d& p : intended) intended_json.push_back({p.x(), p.y()});
  SessionLogger logger(runs_root, run_id,
                       {{"config", config_to_json(config)},
                        {"plan", path_to_json(plan)},
                        {"intended", intended_json}});

  const bool simulated = config.schedule.clock == ClockKind::simulated;
  TelemetrySource telemetry(config.scene.seed, simulated);
  world.on_capture = [&](double t, const GrayImage& image) { logger.log_rgb(t, image); };

  SimulationResult result;
  result.run_dir = logger.directory();
  std::mutex trace_mutex;
  ExecutionHooks hooks;
  std::uint64_t ticks = 0;
  hooks.on_tick = [&](const PerceptionSnapshot& snap, const RoverState& state) {
    logger.log_pose(snap.timestamp, state);
    logger.log_detections(snap.timestamp, snap.seq, snap.detections);
    if (ticks++ % 10 == 0) logger.log_telemetry(telemetry.sample(snap.timestamp));
  };
  hooks.on_event = [&](const TraceEvent& e) {
    {
      std::lock_guard lock(trace_mutex);
      result.trace.events.push_back(e);
    }
    if (e.channel != Channel::depth_ready) return;
    if (const auto capture = world.last_capture())
      logger.log_depth(e.t, capture->estimate.depth, capture->gt, capture->estimate.capture_timestamp);
  };

  result.execution = execute_path(plan, world, config.schedule, config.safety, config.drive, start, hooks);
  result.nav = nav_metrics(result.execution, intended);
  logger.finalize({{"completed", result.execution.completed},
                   {"elapsed_s", result.execution.elapsed},
                   {"nav", to_json(result.nav)}});
  return result;
}

}  // namespace depthrover
