#include "depthrover/monodepth.hpp"

#include <bit>
#include <cmath>
#include <random>

namespace depthrover {

void MonoDepthConfig::validate() const {
  if (!(max_range > 0)) throw ConfigError("monodepth.max_range must be positive");
  if (!(latency >= 0)) throw ConfigError("monodepth.latency must be non-negative");
  if (!(noise_sigma >= 0)) throw ConfigError("monodepth.noise_sigma must be non-negative");
}

MonoDepthResult OracleMonoDepth::estimate(const MonoDepthConfig& config,
                                          const StereoFrame& frame,
                                          const std::optional<DepthMap>& gt_depth_m) const {
  config.validate();
  if (!gt_depth_m) throw ConfigError("oracle monodepth backend requires ground-truth depth");
  const DepthMap& gt = *gt_depth_m;

  // Noise stream keyed on (seed, capture time).
  std::seed_seq seq{std::uint32_t(config.seed), std::uint32_t(config.seed >> 32),
                    std::uint32_t(std::bit_cast<std::uint64_t>(frame.timestamp)),
                    std::uint32_t(std::bit_cast<std::uint64_t>(frame.timestamp) >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, 1.0);

  MonoDepthResult result;
  result.depth = DepthMap(gt.width(), gt.height());
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      const double eps = config.noise_sigma * noise(rng);
      if (!gt.valid(y, x)) continue;
      const double z = gt.values(y, x) * std::exp(eps);
      if (z > config.max_range || !(z > 0) || !std::isfinite(z)) continue;
      result.depth.values(y, x) = z;
      result.depth.valid(y, x) = true;
    }
  result.capture_timestamp = frame.timestamp;
  result.ready_timestamp = frame.timestamp + config.latency;
  result.backend_id = "oracle";
  return result;
}

MonoDepthResult estimate(const MonoDepthConfig& config, const StereoFrame& frame,
                         const std::optional<DepthMap>& gt_depth_m) {
  return OracleMonoDepth{}.estimate(config, frame, gt_depth_m);
}

DepthMap gt_depth_meters(const StereoFrame& frame, double units_per_meter) {
  DepthMap out(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      const double z = frame.gt_depth_left(y, x);
      if (std::isfinite(z) && z > 0) {
        out.values(y, x) = z / units_per_meter;
        out.valid(y, x) = true;
      }
    }
  return out;
}

BackendRegistry BackendRegistry::with_defaults() {
  BackendRegistry r;
  r.register_backend("oracle", std::make_shared<OracleMonoDepth>());
  return r;
}

void BackendRegistry::register_backend(const std::string& id,
                                       std::shared_ptr<const MonoDepthBackend> backend) {
  if (!backend) throw ConfigError("null monodepth backend: " + id);
  if (!backends_.emplace(id, std::move(backend)).second)
    throw ConfigError("duplicate monodepth backend id: " + id);
}

std::shared_ptr<const MonoDepthBackend> BackendRegistry::select(const std::string& id) const {
  const auto it = backends_.find(id);
  if (it == backends_.end()) throw ConfigError("unknown monodepth backend: " + id);
  return it->second;
}

bool BackendRegistry::contains(const std::string& id) const {
  return backends_.count(id) > 0;
}

}  // namespace depthrover
