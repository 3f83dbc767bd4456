#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "depthrover/pipeline.hpp"

namespace depthrover {

struct RoverState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;  // (-pi, pi]
  double linear_speed = 0.0;
  double angular_speed = 0.0;
  bool halted = false;
  std::optional<std::string> halt_reason;
};

/// Bang-bang wheel levels, each in {-1, 0, +1}.
struct MotorCommand {
  int left = 0;
  int right = 0;

  static MotorCommand stop() { return {0, 0}; }
  bool is_stop() const { return left == 0 && right == 0; }
  bool operator==(const MotorCommand&) const = default;
};

struct KeyCommand {
  MotorCommand command;
  std::optional<std::string> warning;  // set for unrecognized keys
};

/// w/s drive, a/d spin in place, space stops. Case-insensitive.
KeyCommand map_key(char key);
/// Accepts "w", "a", "s", "d", " " and "space".
KeyCommand map_key(const std::string& key);

struct DriveParams {
  double wheel_speed = 0.5;   // units/s at level 1
  double track_width = 0.3;   // units

  void validate() const;
};

/// Exact arc integration of differential-drive kinematics. A halted state is
/// returned unchanged (with zero speeds).
RoverState step(const RoverState& state, MotorCommand cmd, double dt, const DriveParams& params);

RoverState halt(RoverState state, std::string reason);
RoverState resume(RoverState state);

struct PathStep {
  double duration = 0.0;  // seconds
  MotorCommand command;
};

struct PathPlan {
  std::string name;
  std::vector<PathStep> steps;

  double total_duration() const;
  /// Command in effect at plan time t, or stop after the end.
  MotorCommand command_at(double t) const;
  void validate() const;
};

/// {"name":..., "steps":[{"duration_s":..., "left":..., "right":...}]}
nlohmann::json path_to_json(const PathPlan& plan);
PathPlan path_from_json(const nlohmann::json& j);

/// Advances `state` through plan time [t0, t1), splitting at step boundaries.
RoverState advance_plan(RoverState state, const PathPlan& plan, double t0, double t1,
                        const DriveParams& params);

/// Ideal (obstacle-free) route of the plan: the pose at every step boundary
/// and every `sample_dt` in between.
std::vector<Eigen::Vector2d> plan_polyline(const PathPlan& plan, const RoverState& start,
                                           const DriveParams& params, double sample_dt = 0.1);

struct SafetyConfig {
  double stop_range = 0.5;          // meters
  double corridor_halfwidth = 0.2;  // fraction of image width, centered

  void validate() const;
};

struct SafetyDecision {
  bool halt = false;
  std::string reason;
};

/// Halt iff a detection nearer than stop_range has its box center inside the
/// central corridor of an image `image_width` pixels wide.
SafetyDecision safety_gate(const PerceptionSnapshot& snapshot, const SafetyConfig& config,
                           int image_width);

struct TrajectorySample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  bool halted = false;

  bool operator==(const TrajectorySample&) const = default;
};

struct HaltEvent {
  double t = 0.0;
  std::string reason;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();

  bool operator==(const HaltEvent&) const = default;
};

struct ExecutionReport {
  bool completed = false;
  double elapsed = 0.0;
  std::vector<TrajectorySample> trajectory;
  std::vector<HaltEvent> halt_events;
};

/// One {"t":..., "x":..., "y":..., "heading":..., "halted":...} per line.
std::string trajectory_to_jsonl(const ExecutionReport& report);

/// A perception world whose camera rides on the rover.
class RoverWorld : public PerceptionWorld {
 public:
  virtual void set_rover_state(const RoverState& state) = 0;
  virtual int detection_image_width() const = 0;
};

/// Hooks for observers of `execute_path` (session logging).
struct ExecutionHooks {
  std::function<void(const PerceptionSnapshot&, const RoverState&)> on_tick;
  std::function<void(const TraceEvent&)> on_event;
};

/// Runs the plan one control period per detection tick, evaluating the
/// safety gate before each motion step. A halt aborts the plan.
ExecutionReport execute_path(const PathPlan& plan, RoverWorld& world,
                             const ScheduleConfig& schedule, const SafetyConfig& safety,
                             const DriveParams& drive, const RoverState& initial = {},
                             const ExecutionHooks& hooks = {});

}  // namespace depthrover
