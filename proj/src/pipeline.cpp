#include "depthrover/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "depthrover/geometry.hpp"

namespace depthrover {

void ScheduleConfig::validate() const {
  if (!(detection_rate > 0 && std::isfinite(detection_rate)))
    throw DomainError("schedule.detection_rate must be positive");
  if (!(depth_rate > 0 && std::isfinite(depth_rate)))
    throw DomainError("schedule.depth_rate must be positive");
  if (!(depth_latency >= 0 && std::isfinite(depth_latency)))
    throw DomainError("schedule.depth_latency must be non-negative");
}

std::string to_string(Channel ch) {
  switch (ch) {
    case Channel::detect: return "detect";
    case Channel::depth_start: return "depth_start";
    case Channel::depth_ready: return "depth_ready";
  }
  return "unknown";
}

std::size_t TickTrace::count(Channel ch) const {
  return std::size_t(std::count_if(events.begin(), events.end(),
                                   [ch](const TraceEvent& e) { return e.channel == ch; }));
}

std::vector<double> TickTrace::times(Channel ch) const {
  std::vector<double> out;
  for (const TraceEvent& e : events)
    if (e.channel == ch) out.push_back(e.t);
  return out;
}

std::string TickTrace::to_jsonl() const {
  std::ostringstream os;
  for (const TraceEvent& e : events)
    os << nlohmann::json{{"t", e.t}, {"ch", to_string(e.channel)}, {"seq", e.seq}}.dump() << '\n';
  return os.str();
}

PerceptionPipeline::PerceptionPipeline(ScheduleConfig config, PerceptionWorld& world,
                                       PipelineSinks sinks)
    : config_(config), world_(world), sinks_(std::move(sinks)),
      snapshot_(std::make_shared<const PerceptionSnapshot>()) {
  config_.validate();
}

std::shared_ptr<const PerceptionSnapshot> PerceptionPipeline::latest_snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

void PerceptionPipeline::publish(std::shared_ptr<const PerceptionSnapshot> snap) {
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(snap);
}

std::shared_ptr<const PerceptionSnapshot> PerceptionPipeline::make_snapshot(
    double t, std::vector<Detection> dets, std::shared_ptr<const MonoDepthResult> depth) {
  auto snap = std::make_shared<PerceptionSnapshot>();
  snap->seq = ++seq_;
  snap->timestamp = t;
  snap->detections = std::move(dets);
  snap->detections_timestamp = t;
  if (depth) snap->depth_staleness = std::max(0.0, t - depth->capture_timestamp);
  snap->depth = std::move(depth);
  return snap;
}

TickTrace PerceptionPipeline::run(double duration) {
  if (!(duration > 0)) throw DomainError("duration must be positive");
  stop_ = false;
  return config_.clock == ClockKind::simulated ? run_simulated(duration) : run_real(duration);
}

void PerceptionPipeline::stop() {
  {
    std::lock_guard lock(wait_mutex_);
    stop_ = true;
  }
  wake_.notify_all();
}

// Discrete-event loop on an integer nanosecond clock. At equal timestamps
// the order is depth_ready, depth_start, detect.
TickTrace PerceptionPipeline::run_simulated(double duration) {
  if (!std::isfinite(duration)) throw DomainError("simulated clock needs a finite duration");
  using ns_t = std::int64_t;
  constexpr ns_t kNone = std::numeric_limits<ns_t>::max();
  const auto to_ns = [](double s) { return ns_t(std::llround(s * 1e9)); };
  const auto to_s = [](ns_t ns) { return double(ns) / 1e9; };
  const ns_t detect_period = to_ns(1.0 / config_.detection_rate);
  const ns_t depth_period = to_ns(1.0 / config_.depth_rate);
  const ns_t latency = to_ns(config_.depth_latency);
  const ns_t end = to_ns(duration);

  TickTrace trace;
  const auto emit = [&](ns_t t, Channel ch, std::uint64_t seq) {
    trace.events.push_back({to_s(t), ch, seq});
    if (sinks_.on_event) sinks_.on_event(trace.events.back());
  };

  std::shared_ptr<const MonoDepthResult> latest_depth;
  std::shared_ptr<MonoDepthResult> in_flight;
  ns_t ready_at = kNone;
  bool queued = false;
  std::uint64_t job_seq = 0;
  ns_t next_detect = 0, next_depth = 0;

  const auto start_job = [&](ns_t t) {
    auto job = world_.capture_depth(to_s(t));
    in_flight = std::make_shared<MonoDepthResult>(job());
    in_flight->capture_timestamp = to_s(t);
    in_flight->ready_timestamp = to_s(t + latency);
    ready_at = t + latency;
    emit(t, Channel::depth_start, ++job_seq);
  };
  const auto land_job = [&](ns_t t) {
    if (ready_at != t) return;
    latest_depth = std::move(in_flight);
    in_flight.reset();
    ready_at = kNone;
    emit(t, Channel::depth_ready, job_seq);
    if (queued) {
      queued = false;
      start_job(t);
    }
  };

  while (!stop_) {
    const ns_t t = std::min({next_detect, next_depth, ready_at});
    if (t >= end) break;
    land_job(t);
    if (next_depth == t) {
      if (ready_at == kNone)
        start_job(t);
      else if (config_.overlap_policy == OverlapPolicy::queue_one)
        queued = true;
      next_depth += depth_period;
      land_job(t);  // zero latency lands before the detect tick
    }
    if (next_detect == t) {
      auto snap = make_snapshot(to_s(t), world_.detect(to_s(t)), latest_depth);
      publish(snap);
      emit(t, Channel::detect, snap->seq);
      if (sinks_.on_snapshot) sinks_.on_snapshot(*snap);
      next_detect += detect_period;
    }
  }
  return trace;
}

TickTrace PerceptionPipeline::run_real(double duration) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto at = [start](double s) {
    return start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(s));
  };
  const auto elapsed = [start] { return std::chrono::duration<double>(clock::now() - start).count(); };
  const double detect_period = 1.0 / config_.detection_rate;
  const double depth_period = 1.0 / config_.depth_rate;

  // Returns false if stopped before the deadline.
  const auto sleep_until = [&](double s) {
    if (!std::isfinite(s)) s = 1e9;
    std::unique_lock lock(wait_mutex_);
    return !wake_.wait_until(lock, at(s), [&] { return stop_.load(); });
  };

  std::mutex trace_mutex;
  TickTrace trace;
  const auto emit = [&](double t, Channel ch, std::uint64_t seq) {
    TraceEvent e{t, ch, seq};
    {
      std::lock_guard lock(trace_mutex);
      trace.events.push_back(e);
    }
    if (sinks_.on_event) sinks_.on_event(e);
  };

  std::mutex depth_mutex;
  std::shared_ptr<const MonoDepthResult> latest_depth;

  std::thread slow([&] {
    std::uint64_t job_seq = 0;
    double next_start = 0.0;
    while (!stop_) {
      if (next_start >= duration || !sleep_until(next_start)) break;
      const double t = elapsed();
      emit(t, Channel::depth_start, ++job_seq);
      auto result = std::make_shared<MonoDepthResult>(world_.capture_depth(t)());
      result->capture_timestamp = t;
      result->ready_timestamp = t + config_.depth_latency;
      if (!sleep_until(result->ready_timestamp)) break;
      const double ready = elapsed();
      if (ready >= duration) break;
      {
        std::lock_guard lock(depth_mutex);
        latest_depth = result;
      }
      emit(ready, Channel::depth_ready, job_seq);

      const double following = (std::floor(t / depth_period) + 1.0) * depth_period;
      if (following > ready) {
        next_start = following;
      } else if (config_.overlap_policy == OverlapPolicy::queue_one) {
        next_start = ready;
      } else {
        next_start = std::ceil(ready / depth_period) * depth_period;
      }
    }
  });

  for (std::int64_t k = 0; !stop_; ++k) {
    const double scheduled = double(k) * detect_period;
    if (scheduled >= duration || !sleep_until(scheduled)) break;
    const double t = elapsed();
    std::vector<Detection> dets = world_.detect(t);
    std::shared_ptr<const MonoDepthResult> depth;
    {
      std::lock_guard lock(depth_mutex);
      depth = latest_depth;
    }
    auto snap = make_snapshot(t, std::move(dets), std::move(depth));
    publish(snap);
    emit(t, Channel::detect, snap->seq);
    if (sinks_.on_snapshot) sinks_.on_snapshot(*snap);
  }

  stop();
  slow.join();
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) { return a.t < b.t; });
  return trace;
}

}  // namespace depthrover
