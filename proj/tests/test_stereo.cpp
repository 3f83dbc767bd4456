#include <doctest.h>

#include <bit>
#include <chrono>
#include <random>

#include "depthrover/stereo.hpp"

using namespace depthrover;

namespace {

GrayImage noise_texture(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Raster<double> n(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) n(y, x) = double(rng() % 256);
  GrayImage out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          s += n(std::clamp(y + dy, 0, h - 1), std::clamp(x + dx, 0, w - 1));
      out(y, x) = std::uint8_t(std::lround(s / 9));
    }
  return out;
}

// left = wide[:, 0:w], right = wide[:, s:s+w], so true disparity is s.
std::pair<GrayImage, GrayImage> shifted_pair(int w, int h, int s, std::uint64_t seed) {
  const GrayImage wide = noise_texture(w + s, h, seed);
  return {wide.block(0, 0, h, w), wide.block(0, s, h, w)};
}

CostVolume volume_from(int w, int h, int nd, const std::vector<int>& values) {
  CostVolume v(w, h, nd);
  for (std::size_t i = 0; i < values.size(); ++i) v.costs[i] = std::uint16_t(values[i]);
  return v;
}

StereoRig square_rig(int size) {
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(size, size, 60, 60);
  rig.baseline = 1.0;
  return rig;
}

}  // namespace

TEST_CASE("census descriptor of a 3x3 gradient") {
  GrayImage img(3, 3);
  img << 10, 20, 30, 40, 50, 60, 70, 80, 90;
  const CensusImage c = census_transform(img, 3, 3);
  CHECK(c.bits == 8);
  // Neighbors in row-major order skipping the center: 10 20 30 40 | 60 70 80 90.
  CHECK(c.at(1, 1) == 0b00001111u);
  // Top-left corner clamps to itself: nothing strictly darker.
  CHECK(c.at(0, 0) == 0u);
  // Bottom-right: clamped copies of the center (bits 4, 6, 7) are not darker.
  CHECK(c.at(2, 2) == 0b00101111u);

  const GrayImage flat = GrayImage::Constant(5, 5, 100);
  const CensusImage cf = census_transform(flat, 5, 5);
  CHECK(cf.bits == 24);
  for (auto code : cf.codes) CHECK(code == 0u);

  CHECK_THROWS_AS(census_transform(img, 4, 3), DomainError);
  CHECK_THROWS_AS(census_transform(img, 5, 5), DomainError);
}

TEST_CASE("hamming distance") {
  CHECK(hamming(0, 0) == 0);
  CHECK(hamming(0b1011, 0b0001) == 2);
  CHECK(hamming(~0ull, 0) == 64);
}

TEST_CASE("cost volume matches brute force") {
  const GrayImage l = noise_texture(8, 8, 1), r = noise_texture(8, 8, 2);
  const CensusImage cl = census_transform(l, 3, 3), cr = census_transform(r, 3, 3);
  const CostVolume v = build_cost_volume(cl, cr, 4);
  const CostVolume vr = build_right_cost_volume(cl, cr, 4);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int d = 0; d < 4; ++d) {
        const int expect = x - d >= 0 ? std::popcount(cl.at(x, y) ^ cr.at(x - d, y)) : 8;
        CHECK(v.at(x, y, d) == expect);
        const int expect_r = x + d < 8 ? std::popcount(cr.at(x, y) ^ cl.at(x + d, y)) : 8;
        CHECK(vr.at(x, y, d) == expect_r);
      }
}

TEST_CASE("identical images have zero cost at zero disparity") {
  const GrayImage img = noise_texture(16, 8, 3);
  const CensusImage c = census_transform(img, 5, 5);
  const CostVolume v = build_cost_volume(c, c, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) CHECK(v.at(x, y, 0) == 0);
}

TEST_CASE("aggregation of a zero volume stays zero") {
  SgmParams p;
  p.p1 = 5;
  p.p2 = 20;
  for (int paths : {4, 8}) {
    p.num_paths = paths;
    const CostVolume agg = aggregate_paths(CostVolume(7, 5, 6, 0), p);
    for (auto v : agg.costs) CHECK(v == 0);
  }
}

TEST_CASE("aggregation on a single row by hand") {
  // One row, four pixels, two disparities. Vertical paths see only the pixel
  // itself, so S = L_lr + L_rl + 2C.
  const CostVolume c = volume_from(4, 1, 2, {0, 5, 5, 0, 5, 0, 0, 5});
  SgmParams p;
  p.p1 = 1;
  p.p2 = 3;
  p.num_paths = 4;
  const CostVolume s = aggregate_paths(c, p);
  // L_lr = [0,5] [5,1] [6,0] [1,5]; L_rl = [1,5] [6,0] [5,1] [0,5].
  const int expect[4][2] = {{1, 20}, {21, 1}, {21, 1}, {1, 20}};
  for (int x = 0; x < 4; ++x)
    for (int d = 0; d < 2; ++d) CHECK(s.at(x, 0, d) == expect[x][d]);
}

TEST_CASE("aggregation rejects bad penalties and path counts") {
  SgmParams p;
  p.p1 = 10;
  p.p2 = 10;
  CHECK_THROWS_AS(aggregate_paths(CostVolume(2, 2, 2), p), DomainError);
  p.p2 = 20;
  p.num_paths = 6;
  CHECK_THROWS_AS(aggregate_paths(CostVolume(2, 2, 2), p), DomainError);
  CHECK(sgm_directions(4).size() == 4);
  CHECK(sgm_directions(8).size() == 8);
}

TEST_CASE("winner-take-all with subpixel refinement") {
  SgmParams p;
  p.uniqueness_ratio = 10;
  std::vector<int> costs(16, 50);
  costs[4] = 4;
  costs[5] = 1;
  costs[6] = 4;
  const DisparityMap a = select_disparity(volume_from(1, 1, 16, costs), p);
  REQUIRE(a.valid(0, 0));
  CHECK(a.values(0, 0) == doctest::Approx(5.0));

  costs[4] = 3;
  costs[6] = 2;
  const DisparityMap b = select_disparity(volume_from(1, 1, 16, costs), p);
  REQUIRE(b.valid(0, 0));
  CHECK(b.values(0, 0) == doctest::Approx(5.0 + 1.0 / 6.0));

  // Two equal minima far apart fail the uniqueness test.
  std::vector<int> tie(16, 50);
  tie[3] = 10;
  tie[7] = 10;
  const DisparityMap c = select_disparity(volume_from(1, 1, 16, tie), p);
  CHECK_FALSE(c.valid(0, 0));
  CHECK(c.values(0, 0) == kInvalidDisparity);

  // A second minimum exactly at the ratio boundary is rejected too.
  std::vector<int> edge(16, 50);
  edge[3] = 10;
  edge[9] = 11;
  CHECK_FALSE(select_disparity(volume_from(1, 1, 16, edge), p).valid(0, 0));
  edge[9] = 12;
  CHECK(select_disparity(volume_from(1, 1, 16, edge), p).valid(0, 0));
}

TEST_CASE("subpixel offset is bounded by half a pixel") {
  std::mt19937_64 rng(9);
  SgmParams p;
  p.uniqueness_ratio = 0;
  CostVolume v(50, 20, 16);
  for (auto& c : v.costs) c = std::uint16_t(rng() % 500);
  const DisparityMap m = select_disparity(v, p);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 50; ++x) {
      if (!m.valid(y, x)) continue;
      const std::uint16_t* s = v.pixel(x, y);
      const int argmin = int(std::min_element(s, s + 16) - s);
      CHECK(std::abs(m.values(y, x) - argmin) <= 0.5f);
      CHECK(m.values(y, x) >= 0.0f);
      CHECK(m.values(y, x) <= 15.0f);
    }
}

TEST_CASE("left-right consistency") {
  DisparityMap l(20, 1, 16), r(20, 1, 16);
  l.set(10, 0, 5.0f);
  r.set(5, 0, 5.4f);
  l.set(12, 0, 5.0f);
  r.set(7, 0, 7.0f);
  l.set(14, 0, 5.0f);  // right pixel 9 has no disparity
  l.set(2, 0, 5.0f);   // would land at x = -3
  const DisparityMap out = lr_consistency(l, r, 1.0);
  CHECK(out.valid(0, 10));
  CHECK(out.values(0, 10) == 5.0f);
  CHECK_FALSE(out.valid(0, 12));
  CHECK_FALSE(out.valid(0, 14));
  CHECK_FALSE(out.valid(0, 2));
  CHECK_THROWS_AS(lr_consistency(l, DisparityMap(3, 1, 16), 1.0), DomainError);
}

TEST_CASE("speckle filter removes small islands") {
  DisparityMap m(10, 10, 16);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 6; ++x) m.set(x, y, 8.0f + 0.1f * float(x));
  // Three-pixel island at a different disparity.
  m.set(8, 1, 2.0f);
  m.set(8, 2, 2.5f);
  m.set(9, 2, 2.0f);
  const DisparityMap out = speckle_filter(m, 4, 1.0);
  CHECK_FALSE(out.valid(1, 8));
  CHECK_FALSE(out.valid(2, 9));
  CHECK(out.valid(5, 3));
  CHECK(out.valid.count() == 60);
  // An island whose neighbor differs by more than the range splits in two.
  DisparityMap n(4, 1, 16);
  n.set(0, 0, 1.0f);
  n.set(1, 0, 1.5f);
  n.set(2, 0, 5.0f);
  n.set(3, 0, 5.2f);
  CHECK(speckle_filter(n, 3, 1.0).valid.count() == 0);
  CHECK(speckle_filter(n, 2, 1.0).valid.count() == 4);
  CHECK(speckle_filter(n, 0, 1.0).valid.count() == 4);
}

TEST_CASE("depth from disparity map") {
  const StereoRig rig = StereoRig::paper_mode();
  DisparityMap m(3, 1, 64);
  m.set(0, 0, 24.0f);
  m.set(1, 0, 0.0f);
  const DepthMap d = depth_from_disparity(rig, m);
  CHECK(d.is_valid(0, 0));
  CHECK(d.at(0, 0) == doctest::Approx(rig.intrinsics.focal_px));
  CHECK_FALSE(d.is_valid(1, 0));
  CHECK(std::isinf(d.at(1, 0)));
  CHECK_FALSE(d.is_valid(2, 0));
  const DepthMap meters = to_meters(d, 100.0);
  CHECK(meters.at(0, 0) == doctest::Approx(rig.intrinsics.focal_px / 100.0));
  CHECK_THROWS_AS(to_meters(d, 0.0), DomainError);
}

TEST_CASE("params validation and defaults") {
  const SgmParams d = default_sgm_params();
  CHECK(d.p1 == 24);
  CHECK(d.p2 == 96);
  CHECK_NOTHROW(d.validate());
  const SgmParams small = default_sgm_params(3, 3);
  CHECK(small.p1 == 8);
  CHECK(small.p2 == 32);
  SgmParams bad = d;
  bad.num_disparities = 20;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = d;
  bad.census_width = 4;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = d;
  bad.census_width = 9;
  bad.census_height = 9;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("matching recovers a known shift") {
  const auto [left, right] = shifted_pair(96, 64, 7, 21);
  const StereoResult r = match_images(square_rig(96), left, right, []{
    SgmParams p = default_sgm_params();
    p.num_disparities = 16;
    return p;
  }());
  long good = 0, valid = 0;
  for (int y = 5; y < 59; ++y)
    for (int x = 24; x < 91; ++x)
      if (r.disparity.valid(y, x)) {
        ++valid;
        good += std::abs(r.disparity.values(y, x) - 7.0f) <= 0.5f;
      }
  CHECK(valid > 0.8 * 54 * 67);
  CHECK(good >= 0.95 * valid);
}

TEST_CASE("matching is deterministic") {
  const auto [left, right] = shifted_pair(64, 48, 5, 4);
  SgmParams p = default_sgm_params();
  p.num_disparities = 16;
  const StereoResult a = match_images(square_rig(64), left, right, p);
  const StereoResult b = match_images(square_rig(64), left, right, p);
  CHECK(a.disparity.values == b.disparity.values);
  CHECK(a.disparity.valid == b.disparity.valid);
}

TEST_CASE("a large P2 is smoother than a P2 near P1") {
  // Heavily noised shifted pair; jumps are counted only right of the
  // disparity range, where every candidate exists.
  auto [left, right] = shifted_pair(96, 64, 9, 31);
  std::mt19937_64 rng(2);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 96; ++x)
      right(y, x) = std::uint8_t(std::clamp(int(right(y, x)) + int(rng() % 121) - 60, 0, 255));
  const CensusImage cl = census_transform(left, 5, 5), cr = census_transform(right, 5, 5);
  const CostVolume c = build_cost_volume(cl, cr, 32);
  const auto jumps_for = [&](int p2) {
    SgmParams p;
    p.p1 = 24;
    p.p2 = p2;
    p.uniqueness_ratio = 0;
    const DisparityMap m = select_disparity(aggregate_paths(c, p), p);
    long jumps = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 33; x < 96; ++x)
        jumps += m.valid(y, x) && m.valid(y, x - 1) && std::abs(m.values(y, x) - m.values(y, x - 1)) > 1.0f;
    return jumps;
  };
  const long rough = jumps_for(25);
  CHECK(rough > 10);
  for (int p2 : {48, 96, 192, 384}) {
    CAPTURE(p2);
    CHECK(jumps_for(p2) * 10 <= rough);
  }
}

TEST_CASE("compute_depth checks frame size") {
  StereoFrame f;
  f.left = GrayImage::Zero(10, 10);
  f.right = GrayImage::Zero(10, 10);
  CHECK_THROWS_AS(compute_depth(square_rig(64), f, default_sgm_params()), DomainError);
}

TEST_CASE("500x500 match with 64 disparities finishes within 2 s") {
  const auto [left, right] = shifted_pair(500, 500, 12, 77);
  const StereoRig rig = StereoRig::paper_mode();
  const auto t0 = std::chrono::steady_clock::now();
  const StereoResult r = match_images(rig, left, right, default_sgm_params());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("match_images 500x500 D=64: " << secs << " s");
  CHECK(secs <= 2.0);
  CHECK(r.disparity.valid_fraction() > 0.5);
}
