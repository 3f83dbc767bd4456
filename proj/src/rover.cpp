#include "depthrover/rover.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "depthrover/geometry.hpp"

namespace depthrover {

KeyCommand map_key(char key) {
  switch (std::tolower(static_cast<unsigned char>(key))) {
    case 'w': return {{+1, +1}, std::nullopt};
    case 's': return {{-1, -1}, std::nullopt};
    case 'a': return {{-1, +1}, std::nullopt};
    case 'd': return {{+1, -1}, std::nullopt};
    case ' ': return {MotorCommand::stop(), std::nullopt};
    default: return {MotorCommand::stop(), "unknown key '" + std::string(1, key) + "' ignored"};
  }
}

KeyCommand map_key(const std::string& key) {
  if (key == "space") return map_key(' ');
  if (key.size() != 1) return {MotorCommand::stop(), "unknown key '" + key + "' ignored"};
  return map_key(key[0]);
}

void DriveParams::validate() const {
  if (!(wheel_speed > 0)) throw DomainError("rover.wheel_speed must be positive");
  if (!(track_width > 0)) throw DomainError("rover.track_width must be positive");
}

RoverState step(const RoverState& state, MotorCommand cmd, double dt, const DriveParams& params) {
  if (!(dt > 0)) throw DomainError("step dt must be positive");
  if (std::abs(cmd.left) > 1 || std::abs(cmd.right) > 1)
    throw DomainError("motor levels must be -1, 0 or +1");
  RoverState next = state;
  if (state.halted) {
    next.linear_speed = 0.0;
    next.angular_speed = 0.0;
    return next;
  }
  const double v = params.wheel_speed * (cmd.left + cmd.right) / 2.0;
  const double w = params.wheel_speed * (cmd.right - cmd.left) / params.track_width;
  const double h0 = state.heading;
  if (w == 0.0) {
    next.position += v * dt * Eigen::Vector2d(std::cos(h0), std::sin(h0));
    next.heading = wrap_angle(h0);
  } else {
    const double h1 = h0 + w * dt;
    const double radius = v / w;
    next.position.x() += radius * (std::sin(h1) - std::sin(h0));
    next.position.y() -= radius * (std::cos(h1) - std::cos(h0));
    next.heading = wrap_angle(h1);
  }
  next.linear_speed = v;
  next.angular_speed = w;
  return next;
}

RoverState halt(RoverState state, std::string reason) {
  state.halted = true;
  state.halt_reason = std::move(reason);
  state.linear_speed = 0.0;
  state.angular_speed = 0.0;
  return state;
}

RoverState resume(RoverState state) {
  state.halted = false;
  state.halt_reason.reset();
  return state;
}

double PathPlan::total_duration() const {
  double total = 0.0;
  for (const PathStep& s : steps) total += s.duration;
  return total;
}

MotorCommand PathPlan::command_at(double t) const {
  double start = 0.0;
  for (const PathStep& s : steps) {
    if (t >= start && t < start + s.duration) return s.command;
    start += s.duration;
  }
  return MotorCommand::stop();
}

void PathPlan::validate() const {
  for (const PathStep& s : steps) {
    if (!(s.duration > 0) || !std::isfinite(s.duration))
      throw DomainError("path step durations must be positive");
    if (std::abs(s.command.left) > 1 || std::abs(s.command.right) > 1)
      throw DomainError("path step levels must be -1, 0 or +1");
  }
}

nlohmann::json path_to_json(const PathPlan& plan) {
  nlohmann::json steps = nlohmann::json::array();
  for (const PathStep& s : plan.steps)
    steps.push_back({{"duration_s", s.duration}, {"left", s.command.left}, {"right", s.command.right}});
  return {{"name", plan.name}, {"steps", steps}};
}

PathPlan path_from_json(const nlohmann::json& j) {
  PathPlan plan;
  plan.name = j.value("name", std::string());
  for (const auto& js : j.at("steps")) {
    PathStep s;
    s.duration = js.at("duration_s").get<double>();
    s.command.left = js.at("left").get<int>();
    s.command.right = js.at("right").get<int>();
    plan.steps.push_back(s);
  }
  plan.validate();
  return plan;
}

RoverState advance_plan(RoverState state, const PathPlan& plan, double t0, double t1,
                        const DriveParams& params) {
  double start = 0.0;
  for (const PathStep& s : plan.steps) {
    const double lo = std::max(t0, start), hi = std::min(t1, start + s.duration);
    if (hi > lo) state = step(state, s.command, hi - lo, params);
    start += s.duration;
    if (start >= t1) break;
  }
  return state;
}

std::vector<Eigen::Vector2d> plan_polyline(const PathPlan& plan, const RoverState& start,
                                           const DriveParams& params, double sample_dt) {
  if (!(sample_dt > 0)) throw DomainError("sample_dt must be positive");
  RoverState s = resume(start);
  std::vector<Eigen::Vector2d> points{s.position};
  for (const PathStep& ps : plan.steps) {
    const int n = std::max(1, int(std::ceil(ps.duration / sample_dt - 1e-9)));
    for (int i = 0; i < n; ++i) {
      s = step(s, ps.command, ps.duration / n, params);
      if ((s.position - points.back()).norm() > 0) points.push_back(s.position);
    }
  }
  return points;
}

void SafetyConfig::validate() const {
  if (!(stop_range > 0)) throw DomainError("safety.stop_range must be positive");
  if (!(corridor_halfwidth > 0 && corridor_halfwidth <= 0.5))
    throw DomainError("safety.corridor_halfwidth must lie in (0, 0.5]");
}

SafetyDecision safety_gate(const PerceptionSnapshot& snapshot, const SafetyConfig& config,
                           int image_width) {
  const double center = image_width / 2.0;
  const double half = config.corridor_halfwidth * image_width;
  for (const Detection& d : snapshot.detections) {
    if (!d.range || !(*d.range < config.stop_range)) continue;
    if (std::abs(d.box.center_x() - center) > half) continue;
    char reason[96];
    std::snprintf(reason, sizeof(reason), "obstacle at %.2f m in path", *d.range);
    return {true, reason};
  }
  return {};
}

std::string trajectory_to_jsonl(const ExecutionReport& report) {
  std::string out;
  for (const TrajectorySample& s : report.trajectory)
    out += nlohmann::json{{"t", s.t}, {"x", s.x}, {"y", s.y}, {"heading", s.heading}, {"halted", s.halted}}
               .dump() +
           '\n';
  return out;
}

ExecutionReport execute_path(const PathPlan& plan, RoverWorld& world,
                             const ScheduleConfig& schedule, const SafetyConfig& safety,
                             const DriveParams& drive, const RoverState& initial,
                             const ExecutionHooks& hooks) {
  plan.validate();
  drive.validate();
  safety.validate();
  const double period = 1.0 / schedule.detection_rate;
  const double total = plan.total_duration();

  RoverState state = initial;
  world.set_rover_state(state);
  ExecutionReport report;
  PerceptionPipeline* running = nullptr;

  PipelineSinks sinks;
  sinks.on_event = hooks.on_event;
  sinks.on_snapshot = [&](const PerceptionSnapshot& snap) {
    const double plan_t = double(snap.seq - 1) * period;
    bool finished = plan_t >= total - 1e-9;
    if (!finished && !state.halted) {
      const SafetyDecision decision = safety_gate(snap, safety, world.detection_image_width());
      if (decision.halt) {
        state = halt(state, decision.reason);
        report.halt_events.push_back({snap.timestamp, decision.reason, state.position});
      }
    }
    report.trajectory.push_back(
        {snap.timestamp, state.position.x(), state.position.y(), state.heading, state.halted});
    if (hooks.on_tick) hooks.on_tick(snap, state);
    if (finished || state.halted) {
      report.completed = finished && !state.halted;
      report.elapsed = snap.timestamp;
      running->stop();
      return;
    }
    state = advance_plan(state, plan, plan_t, std::min(plan_t + period, total), drive);
    world.set_rover_state(state);
  };

  PerceptionPipeline pipeline(schedule, world, std::move(sinks));
  running = &pipeline;
  pipeline.run(total + 2.0 * period);
  if (!report.completed && report.halt_events.empty() && !report.trajectory.empty())
    report.elapsed = report.trajectory.back().t;
  return report;
}

}  // namespace depthrover
