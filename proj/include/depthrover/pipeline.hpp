#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "depthrover/detect.hpp"
#include "depthrover/monodepth.hpp"

namespace depthrover {

enum class OverlapPolicy { drop, queue_one };
enum class ClockKind { simulated, real };

struct ScheduleConfig {
  double detection_rate = 10.0;  // Hz
  double depth_rate = 0.1;       // Hz
  double depth_latency = 7.0;    // seconds
  OverlapPolicy overlap_policy = OverlapPolicy::drop;
  ClockKind clock = ClockKind::simulated;

  void validate() const;
};

struct PerceptionSnapshot {
  std::uint64_t seq = 0;
  double timestamp = 0.0;  // publication time
  std::vector<Detection> detections;
  double detections_timestamp = 0.0;
  std::shared_ptr<const MonoDepthResult> depth;  // null until the first result lands
  double depth_staleness = 0.0;                  // timestamp - depth capture time
};

enum class Channel { detect, depth_start, depth_ready };

std::string to_string(Channel ch);

struct TraceEvent {
  double t = 0.0;
  Channel channel = Channel::detect;
  std::uint64_t seq = 0;

  bool operator==(const TraceEvent&) const = default;
};

struct TickTrace {
  std::vector<TraceEvent> events;

  std::size_t count(Channel ch) const;
  std::vector<double> times(Channel ch) const;
  /// One {"t":..., "ch":"detect|depth_start|depth_ready", "seq":...} per line.
  std::string to_jsonl() const;
};

/// What the scheduler drives. `detect` runs on the fast channel; the job
/// returned by `capture_depth` runs on the slow channel. Under the real
/// clock the two are invoked from different threads.
class PerceptionWorld {
 public:
  virtual ~PerceptionWorld() = default;
  virtual std::vector<Detection> detect(double t) = 0;
  virtual std::function<MonoDepthResult()> capture_depth(double t) = 0;
};

struct PipelineSinks {
  /// Called on the fast channel right after each snapshot is published.
  std::function<void(const PerceptionSnapshot&)> on_snapshot;
  std::function<void(const TraceEvent&)> on_event;
};

/// Fast detection channel plus slow asynchronous depth channel.
class PerceptionPipeline {
 public:
  PerceptionPipeline(ScheduleConfig config, PerceptionWorld& world, PipelineSinks sinks = {});
  PerceptionPipeline(const PerceptionPipeline&) = delete;
  PerceptionPipeline& operator=(const PerceptionPipeline&) = delete;

  /// Runs until `duration` seconds elapse (events at t >= duration do not
  /// fire) or `stop()` is called. The simulated clock requires a finite
  /// duration.
  TickTrace run(double duration);

  /// Never blocks on the depth channel. Before the first tick: seq 0.
  std::shared_ptr<const PerceptionSnapshot> latest_snapshot() const;

  /// Safe from any thread, including from inside a sink.
  void stop();

  const ScheduleConfig& config() const { return config_; }

 private:
  TickTrace run_simulated(double duration);
  TickTrace run_real(double duration);
  void publish(std::shared_ptr<const PerceptionSnapshot> snap);
  std::shared_ptr<const PerceptionSnapshot> make_snapshot(double t, std::vector<Detection> dets,
                                                          std::shared_ptr<const MonoDepthResult> depth);

  ScheduleConfig config_;
  PerceptionWorld& world_;
  PipelineSinks sinks_;
  std::atomic<bool> stop_{false};
  std::mutex wait_mutex_;
  std::condition_variable wake_;
  std::uint64_t seq_ = 0;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const PerceptionSnapshot> snapshot_;
};

}  // namespace depthrover
