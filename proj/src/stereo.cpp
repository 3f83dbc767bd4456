#include "depthrover/stereo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace depthrover {

void SgmParams::validate() const {
  if (num_disparities < 16 || num_disparities % 16 != 0)
    throw DomainError("num_disparities must be a positive multiple of 16");
  if (census_width < 3 || census_height < 3 || census_width % 2 == 0 ||
      census_height % 2 == 0)
    throw DomainError("census window dimensions must be odd and at least 3");
  if (census_width * census_height > 64)
    throw DomainError("census window must hold at most 64 pixels");
  if (!(p1 > 0 && p1 < p2)) throw DomainError("penalties must satisfy 0 < p1 < p2");
  if (num_paths != 4 && num_paths != 8) throw DomainError("num_paths must be 4 or 8");
  if (long(num_paths) * (census_bits() + p2) > std::numeric_limits<std::uint16_t>::max())
    throw DomainError("p2 too large for 16-bit aggregation");
  if (uniqueness_ratio < 0) throw DomainError("uniqueness_ratio must be non-negative");
  if (speckle_window < 0) throw DomainError("speckle_window must be non-negative");
  if (speckle_range < 0) throw DomainError("speckle_range must be non-negative");
}

SgmParams default_sgm_params(int census_width, int census_height) {
  SgmParams p;
  p.census_width = census_width;
  p.census_height = census_height;
  p.p1 = std::max(1, 8 * (p.census_bits() / 8));
  p.p2 = 4 * p.p1;
  return p;
}

CensusImage census_transform(const GrayImage& image, int window_width, int window_height) {
  if (window_width % 2 == 0 || window_height % 2 == 0 || window_width < 1 || window_height < 1)
    throw DomainError("census window dimensions must be odd");
  if (window_width * window_height > 65) throw DomainError("census window too large");
  const int w = int(image.cols()), h = int(image.rows());
  if (window_width > w || window_height > h) throw DomainError("census window larger than image");

  CensusImage out;
  out.width = w;
  out.height = h;
  out.bits = window_width * window_height - 1;
  out.codes.assign(std::size_t(w) * h, 0);
  const int rx = window_width / 2, ry = window_height / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t center = image(y, x);
      std::uint64_t code = 0;
      int bit = 0;
      for (int dy = -ry; dy <= ry; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -rx; dx <= rx; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = std::clamp(x + dx, 0, w - 1);
          if (image(yy, xx) < center) code |= std::uint64_t(1) << bit;
          ++bit;
        }
      }
      out.codes[std::size_t(y) * w + x] = code;
    }
  }
  return out;
}

int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

namespace {

void check_same_shape(const CensusImage& a, const CensusImage& b, int num_disparities) {
  if (a.width != b.width || a.height != b.height || a.bits != b.bits)
    throw DomainError("census images differ in shape");
  if (num_disparities < 1) throw DomainError("num_disparities must be at least 1");
}

}  // namespace

CostVolume build_cost_volume(const CensusImage& left, const CensusImage& right,
                             int num_disparities) {
  check_same_shape(left, right, num_disparities);
  CostVolume v(left.width, left.height, num_disparities, std::uint16_t(left.bits));
  for (int y = 0; y < left.height; ++y)
    for (int x = 0; x < left.width; ++x) {
      const std::uint64_t code = left.at(x, y);
      const int d_max = std::min(num_disparities - 1, x);
      for (int d = 0; d <= d_max; ++d) v.at(x, y, d) = std::uint16_t(hamming(code, right.at(x - d, y)));
    }
  return v;
}

CostVolume build_right_cost_volume(const CensusImage& left, const CensusImage& right,
                                   int num_disparities) {
  check_same_shape(left, right, num_disparities);
  CostVolume v(right.width, right.height, num_disparities, std::uint16_t(right.bits));
  for (int y = 0; y < right.height; ++y)
    for (int x = 0; x < right.width; ++x) {
      const std::uint64_t code = right.at(x, y);
      const int d_max = std::min(num_disparities - 1, right.width - 1 - x);
      for (int d = 0; d <= d_max; ++d) v.at(x, y, d) = std::uint16_t(hamming(code, left.at(x + d, y)));
    }
  return v;
}

std::vector<std::pair<int, int>> sgm_directions(int num_paths) {
  std::vector<std::pair<int, int>> dirs = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  if (num_paths == 8) dirs.insert(dirs.end(), {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}});
  return dirs;
}

CostVolume aggregate_paths(const CostVolume& volume, const SgmParams& params) {
  if (params.p1 <= 0 || params.p1 >= params.p2) throw DomainError("penalties must satisfy 0 < p1 < p2");
  if (params.num_paths != 4 && params.num_paths != 8) throw DomainError("num_paths must be 4 or 8");
  const int w = volume.width, h = volume.height, nd = volume.num_disparities;
  CostVolume sum(w, h, nd, 0);
  if (w == 0 || h == 0) return sum;

  const int p1 = params.p1, p2 = params.p2;
  std::vector<std::uint16_t> prev_row(std::size_t(w) * nd), cur_row(std::size_t(w) * nd);
  std::vector<std::uint16_t> prev_min(w), cur_min(w);

  for (const auto& [dx, dy] : sgm_directions(params.num_paths)) {
    const int y_begin = dy >= 0 ? 0 : h - 1, y_step = dy >= 0 ? 1 : -1;
    const int x_begin = dx >= 0 ? 0 : w - 1, x_step = dx >= 0 ? 1 : -1;
    for (int yi = 0, y = y_begin; yi < h; ++yi, y += y_step) {
      for (int xi = 0, x = x_begin; xi < w; ++xi, x += x_step) {
        const std::uint16_t* c = volume.pixel(x, y);
        std::uint16_t* l = &cur_row[std::size_t(x) * nd];
        std::uint16_t* s = &sum.costs[sum.index(x, y, 0)];
        const int px = x - dx, py = y - dy;
        std::uint16_t min_l = std::numeric_limits<std::uint16_t>::max();
        if (px < 0 || px >= w || py < 0 || py >= h) {
          for (int d = 0; d < nd; ++d) {
            l[d] = c[d];
            min_l = std::min(min_l, l[d]);
          }
        } else {
          const std::uint16_t* prev = dy != 0 ? &prev_row[std::size_t(px) * nd]
                                              : &cur_row[std::size_t(px) * nd];
          const int prev_min_val = dy != 0 ? prev_min[px] : cur_min[px];
          const int jump = prev_min_val + p2;
          for (int d = 0; d < nd; ++d) {
            int best = std::min<int>(prev[d], jump);
            if (d > 0) best = std::min(best, prev[d - 1] + p1);
            if (d + 1 < nd) best = std::min(best, prev[d + 1] + p1);
            l[d] = std::uint16_t(c[d] + best - prev_min_val);
            min_l = std::min(min_l, l[d]);
          }
        }
        cur_min[x] = min_l;
        for (int d = 0; d < nd; ++d) s[d] = std::uint16_t(s[d] + l[d]);
      }
      std::swap(prev_row, cur_row);
      std::swap(prev_min, cur_min);
    }
  }
  return sum;
}

DisparityMap select_disparity(const CostVolume& aggregated, const SgmParams& params) {
  const int w = aggregated.width, h = aggregated.height, nd = aggregated.num_disparities;
  DisparityMap out(w, h, nd);
  const long ratio = 100 + params.uniqueness_ratio;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint16_t* s = aggregated.pixel(x, y);
      int best_d = 0;
      for (int d = 1; d < nd; ++d)
        if (s[d] < s[best_d]) best_d = d;
      const long best = s[best_d];

      long second = std::numeric_limits<long>::max();
      for (int d = 0; d < nd; ++d)
        if (std::abs(d - best_d) > 1) second = std::min<long>(second, s[d]);
      if (second != std::numeric_limits<long>::max() && second * 100 <= best * ratio) {
        out.invalidate(x, y);
        continue;
      }

      double offset = 0.0;
      if (best_d > 0 && best_d < nd - 1) {
        const double sm = s[best_d - 1], s0 = s[best_d], sp = s[best_d + 1];
        const double denom = 2.0 * (sm + sp - 2.0 * s0);
        if (denom > 0) offset = std::clamp((sm - sp) / denom, -0.5, 0.5);
      }
      out.set(x, y, float(best_d + offset));
    }
  }
  return out;
}

DisparityMap lr_consistency(const DisparityMap& left_disp, const DisparityMap& right_disp,
                            double max_diff) {
  if (left_disp.width() != right_disp.width() || left_disp.height() != right_disp.height())
    throw DomainError("disparity maps differ in size");
  DisparityMap out = left_disp;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      if (!out.valid(y, x)) continue;
      const float dl = out.values(y, x);
      const int xr = x - int(std::lround(dl));
      if (xr < 0 || xr >= out.width() || !right_disp.valid(y, xr) ||
          std::abs(dl - right_disp.values(y, xr)) > max_diff)
        out.invalidate(x, y);
    }
  return out;
}

DisparityMap speckle_filter(const DisparityMap& disp, int window, double range) {
  if (window < 0) throw DomainError("speckle window must be non-negative");
  DisparityMap out = disp;
  const int w = disp.width(), h = disp.height();
  std::vector<int> component(std::size_t(w) * h, -1);
  std::vector<int> stack, members;
  int next_label = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t seed = std::size_t(y0) * w + x0;
      if (!disp.valid(y0, x0) || component[seed] >= 0) continue;
      const int label = next_label++;
      component[seed] = label;
      stack.assign(1, int(seed));
      members.clear();
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        members.push_back(idx);
        const int x = idx % w, y = idx / w;
        const float d = disp.values(y, x);
        constexpr int kDx[4] = {1, -1, 0, 0}, kDy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = x + kDx[k], ny = y + kDy[k];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          const std::size_t nidx = std::size_t(ny) * w + nx;
          if (component[nidx] >= 0 || !disp.valid(ny, nx)) continue;
          if (std::abs(disp.values(ny, nx) - d) > range) continue;
          component[nidx] = label;
          stack.push_back(int(nidx));
        }
      }
      if (int(members.size()) < window)
        for (int idx : members) out.invalidate(idx % w, idx / w);
    }
  }
  return out;
}

DepthMap depth_from_disparity(const StereoRig& rig, const DisparityMap& disp) {
  DepthMap depth(disp.width(), disp.height());
  const double fb = rig.focal_baseline();
  for (int y = 0; y < disp.height(); ++y)
    for (int x = 0; x < disp.width(); ++x)
      if (disp.valid(y, x) && disp.values(y, x) > 0) {
        depth.values(y, x) = fb / double(disp.values(y, x));
        depth.valid(y, x) = true;
      }
  return depth;
}

DepthMap to_meters(const DepthMap& depth, double units_per_meter) {
  if (!(units_per_meter > 0)) throw DomainError("units_per_meter must be positive");
  DepthMap out = depth;
  out.values /= units_per_meter;
  return out;
}

StereoResult match_images(const StereoRig& rig, const GrayImage& left, const GrayImage& right,
                          const SgmParams& params) {
  params.validate();
  if (left.rows() != right.rows() || left.cols() != right.cols())
    throw DomainError("stereo images differ in size");
  const CensusImage cl = census_transform(left, params.census_width, params.census_height);
  const CensusImage cr = census_transform(right, params.census_width, params.census_height);

  DisparityMap disp = select_disparity(
      aggregate_paths(build_cost_volume(cl, cr, params.num_disparities), params), params);
  if (params.lr_max_diff >= 0) {
    const DisparityMap right_disp = select_disparity(
        aggregate_paths(build_right_cost_volume(cl, cr, params.num_disparities), params), params);
    disp = lr_consistency(disp, right_disp, params.lr_max_diff);
  }
  if (params.speckle_window > 0)
    disp = speckle_filter(disp, params.speckle_window, params.speckle_range);

  StereoResult result;
  result.depth = depth_from_disparity(rig, disp);
  result.disparity = std::move(disp);
  return result;
}

StereoResult compute_depth(const StereoRig& rig, const StereoFrame& frame,
                           const SgmParams& params) {
  rig.validate();
  if (frame.left.cols() != rig.intrinsics.width_px || frame.left.rows() != rig.intrinsics.height_px)
    throw DomainError("frame dimensions do not match the rig intrinsics");
  return match_images(rig, frame.left, frame.right, params);
}

}  // namespace depthrover
