#pragma once

#include <cstdint>
#include <vector>

#include "depthrover/geometry.hpp"
#include "depthrover/image.hpp"
#include "depthrover/scene.hpp"

namespace depthrover {

/// Census descriptors: bit k is set iff the k-th window neighbor (row-major,
/// center skipped) is strictly darker than the center pixel.
struct CensusImage {
  int width = 0;
  int height = 0;
  int bits = 0;  // window area - 1
  std::vector<std::uint64_t> codes;

  std::uint64_t at(int x, int y) const { return codes[std::size_t(y) * width + x]; }
};

/// Dense (x, y, d) cost cube, disparity fastest.
struct CostVolume {
  int width = 0;
  int height = 0;
  int num_disparities = 0;
  std::vector<std::uint16_t> costs;

  CostVolume() = default;
  CostVolume(int width, int height, int num_disparities, std::uint16_t fill = 0)
      : width(width), height(height), num_disparities(num_disparities),
        costs(std::size_t(width) * height * num_disparities, fill) {}

  std::size_t index(int x, int y, int d) const {
    return (std::size_t(y) * width + x) * num_disparities + d;
  }
  std::uint16_t& at(int x, int y, int d) { return costs[index(x, y, d)]; }
  std::uint16_t at(int x, int y, int d) const { return costs[index(x, y, d)]; }
  const std::uint16_t* pixel(int x, int y) const { return &costs[index(x, y, 0)]; }
};

struct SgmParams {
  int num_disparities = 64;
  int census_width = 5;
  int census_height = 5;
  int p1 = 24;
  int p2 = 96;
  int num_paths = 8;
  int uniqueness_ratio = 10;  // percent
  double lr_max_diff = 1.0;   // pixels; negative disables the check
  int speckle_window = 100;   // pixels; 0 disables the filter
  double speckle_range = 2.0;

  int census_bits() const { return census_width * census_height - 1; }
  /// Throws DomainError on invalid combinations.
  void validate() const;
};

/// Defaults for a census window: P1 = 8 * (bits / 8), P2 = 4 * P1.
SgmParams default_sgm_params(int census_width = 5, int census_height = 5);

CensusImage census_transform(const GrayImage& image, int window_width, int window_height);

int hamming(std::uint64_t a, std::uint64_t b);

/// cost(x, y, d) = Hamming(left(x, y), right(x - d, y)); columns with
/// x - d < 0 receive the maximum cost `bits`.
CostVolume build_cost_volume(const CensusImage& left, const CensusImage& right,
                             int num_disparities);

/// Roles swapped for the right view: cost(x, y, d) = Hamming(right(x, y),
/// left(x + d, y)); x + d >= width receives the maximum cost.
CostVolume build_right_cost_volume(const CensusImage& left, const CensusImage& right,
                                   int num_disparities);

/// Path directions used by `num_paths` (4 or 8), as (dx, dy) steps.
std::vector<std::pair<int, int>> sgm_directions(int num_paths);

/// Semi-global aggregation S(p, d) = sum over directions r of L_r(p, d).
CostVolume aggregate_paths(const CostVolume& volume, const SgmParams& params);

/// Winner-take-all with parabola subpixel refinement and uniqueness check.
DisparityMap select_disparity(const CostVolume& aggregated, const SgmParams& params);

DisparityMap lr_consistency(const DisparityMap& left_disp, const DisparityMap& right_disp,
                            double max_diff);

/// Invalidates 4-connected components (neighbors joined when their
/// disparities differ by at most `range`) with fewer than `window` pixels.
DisparityMap speckle_filter(const DisparityMap& disp, int window, double range);

/// Z = f * B / d for every valid, positive disparity.
DepthMap depth_from_disparity(const StereoRig& rig, const DisparityMap& disp);

/// Divides depths (scene units) by `units_per_meter`.
DepthMap to_meters(const DepthMap& depth, double units_per_meter);

struct StereoResult {
  DisparityMap disparity;
  DepthMap depth;  // scene units
};

StereoResult match_images(const StereoRig& rig, const GrayImage& left, const GrayImage& right,
                          const SgmParams& params);

StereoResult compute_depth(const StereoRig& rig, const StereoFrame& frame,
                           const SgmParams& params);

}  // namespace depthrover
