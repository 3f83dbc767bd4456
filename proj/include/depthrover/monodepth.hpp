#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "depthrover/image.hpp"
#include "depthrover/scene.hpp"

namespace depthrover {

struct MonoDepthConfig {
  std::string backend = "oracle";
  double max_range = 5.0;   // meters
  double latency = 7.0;     // seconds
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MonoDepthResult {
  DepthMap depth;  // meters
  double capture_timestamp = 0.0;
  double ready_timestamp = 0.0;
  std::string backend_id;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A slow monocular metric-depth source. Implementations report when their
/// result would become available; they never sleep.
class MonoDepthBackend {
 public:
  virtual ~MonoDepthBackend() = default;
  /// `gt_depth_m` is the renderer's ground truth in meters, when the
  /// backend needs it.
  virtual MonoDepthResult estimate(const MonoDepthConfig& config, const StereoFrame& frame,
                                   const std::optional<DepthMap>& gt_depth_m) const = 0;
};

/// Ground truth perturbed by multiplicative log-normal noise, range-capped by
/// invalidation.
class OracleMonoDepth final : public MonoDepthBackend {
 public:
  MonoDepthResult estimate(const MonoDepthConfig& config, const StereoFrame& frame,
                           const std::optional<DepthMap>& gt_depth_m) const override;
};

MonoDepthResult estimate(const MonoDepthConfig& config, const StereoFrame& frame,
                         const std::optional<DepthMap>& gt_depth_m);

/// Ground truth of a rendered frame in meters (sky and non-finite invalid).
DepthMap gt_depth_meters(const StereoFrame& frame, double units_per_meter);

/// Populated at startup; lookups afterwards are read-only and thread-safe.
class BackendRegistry {
 public:
  /// Registry pre-populated with the "oracle" backend.
  static BackendRegistry with_defaults();

  /// Throws ConfigError on a duplicate id.
  void register_backend(const std::string& id, std::shared_ptr<const MonoDepthBackend> backend);
  /// Throws ConfigError on an unknown id.
  std::shared_ptr<const MonoDepthBackend> select(const std::string& id) const;
  bool contains(const std::string& id) const;

 private:
  std::map<std::string, std::shared_ptr<const MonoDepthBackend>> backends_;
};

}  // namespace depthrover
