#include <doctest.h>

#include "depthrover/scene.hpp"

using namespace depthrover;

namespace {

SceneDescription flat_scene(double extent = 40.0) {
  SceneDescription s;
  s.terrain = generate_terrain(1, {extent, extent}, 0.5, 0.0);
  return s;
}

RigPose looking_down(double height) {
  RigPose p;
  p.position = {0, 0, height};
  p.pitch = -M_PI / 2;
  return p;
}

}  // namespace

TEST_CASE("terrain generation") {
  const Terrain a = generate_terrain(5, {10, 8}, 0.25, 0.3);
  const Terrain b = generate_terrain(5, {10, 8}, 0.25, 0.3);
  const Terrain c = generate_terrain(6, {10, 8}, 0.25, 0.3);
  CHECK(a.heightmap == b.heightmap);
  CHECK(a.heightmap != c.heightmap);
  CHECK(a.heightmap.cols() == 41);
  CHECK(a.heightmap.rows() == 33);
  CHECK(a.max_height - a.min_height <= 0.6 + 1e-12);

  const Terrain flat = generate_terrain(5, {10, 8}, 0.25, 0.0);
  CHECK(flat.heightmap.isZero());
  CHECK(flat.height_at(1.3, -2.2) == 0.0);
  CHECK(flat.normal_at(0.1, 0.1).isApprox(Eigen::Vector3d::UnitZ()));

  CHECK_THROWS_AS(generate_terrain(5, {0, 8}, 0.25, 0.3), DomainError);
  CHECK_THROWS_AS(generate_terrain(5, {10, 8}, 0.25, -1.0), DomainError);
}

TEST_CASE("bilinear height interpolates grid samples") {
  const Terrain t = generate_terrain(2, {4, 4}, 0.5, 1.0);
  CHECK(t.height_at(-2.0, -2.0) == doctest::Approx(t.heightmap(0, 0)));
  CHECK(t.height_at(-1.5, -2.0) == doctest::Approx(t.heightmap(0, 1)));
  const double mid = t.height_at(-1.75, -1.75);
  const double avg = (t.heightmap(0, 0) + t.heightmap(0, 1) + t.heightmap(1, 0) + t.heightmap(1, 1)) / 4;
  CHECK(mid == doctest::Approx(avg));
}

TEST_CASE("boulder placement") {
  const Terrain t = generate_terrain(3, {20, 20}, 0.5, 0.2);
  CHECK(place_boulders(t, 9, 0, {0.1, 0.3}).empty());
  const auto a = place_boulders(t, 9, 12, {0.1, 0.3});
  const auto b = place_boulders(t, 9, 12, {0.1, 0.3});
  REQUIRE(a.size() == 12);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].center == b[k].center);
    CHECK(a[k].radii == b[k].radii);
    // Resting: the lowest point touches the terrain under the center.
    CHECK(a[k].center.z() - a[k].radii.z() ==
          doctest::Approx(t.height_at(a[k].center.x(), a[k].center.y())));
    CHECK(a[k].radii.x() >= 0.1);
    CHECK(a[k].radii.y() <= 0.3);
    CHECK(a[k].radii.z() <= std::min(a[k].radii.x(), a[k].radii.y()) + 1e-12);
  }

  BoulderRegion region;
  region.min = {2, -1};
  region.max = {6, 1};
  region.min_gap = 0.2;
  const auto c = place_boulders(t, 4, 5, {0.1, 0.2}, region);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i].center.x() >= 2);
    CHECK(c[i].center.x() <= 6);
    for (std::size_t j = i + 1; j < c.size(); ++j)
      CHECK((c[i].center.head<2>() - c[j].center.head<2>()).norm() >= 0.1 + 0.1 + 0.2);
  }
  CHECK_THROWS_AS(place_boulders(t, 1, -1, {0.1, 0.2}), DomainError);
  CHECK_THROWS_AS(place_boulders(t, 1, 2, {0.3, 0.2}), DomainError);
}

TEST_CASE("straight-down view of flat ground has uniform depth") {
  const SceneDescription scene = flat_scene();
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(64, 64, 60, 60);
  rig.baseline = 0.5;
  const StereoFrame f = render_stereo(scene, rig, looking_down(3.0));
  CHECK(f.gt_label_left.minCoeff() == kTerrainId);
  CHECK(f.gt_label_left.maxCoeff() == kTerrainId);
  CHECK((f.gt_depth_left.array() - 3.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("fronto-parallel plane at disparity 16 shifts the right image by 16 px") {
  const SceneDescription scene = flat_scene();
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(128, 128, 60, 60);
  rig.baseline = 1.0;
  const double z = rig.focal_baseline() / 16.0;
  const StereoFrame f = render_stereo(scene, rig, looking_down(z));

  int total = 0, close = 0;
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x + 16 < 128; ++x) {
      ++total;
      if (std::abs(int(f.right(y, x)) - int(f.left(y, x + 16))) <= 1) ++close;
    }
  }
  CHECK(double(close) / total >= 0.99);
  // The image actually carries texture.
  CHECK(int(f.left.maxCoeff()) - int(f.left.minCoeff()) > 20);
}

TEST_CASE("sky is infinite and black") {
  const SceneDescription scene = flat_scene();
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(64, 64, 60, 60);
  rig.baseline = 0.2;
  RigPose pose;
  pose.position = {0, 0, 1.0};
  pose.pitch = 0.2;
  const StereoFrame f = render_stereo(scene, rig, pose);
  CHECK(f.gt_label_left(0, 32) == kSkyId);
  CHECK(std::isinf(f.gt_depth_left(0, 32)));
  CHECK(f.left(0, 32) == 0);
  CHECK(f.right(0, 32) == 0);
  CHECK(f.gt_label_left(63, 32) == kTerrainId);
}

TEST_CASE("ground-truth depth lands on a scene surface") {
  SceneDescription scene;
  scene.terrain = generate_terrain(11, {30, 30}, 0.25, 0.4);
  BoulderRegion region;
  region.min = {2, -2};
  region.max = {8, 2};
  scene.boulders = place_boulders(scene.terrain, 12, 6, {0.2, 0.5}, region);
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(96, 72, 60, 2 * std::atan(36.0 / (48.0 / std::tan(M_PI / 6))) * 180 / M_PI);
  rig.baseline = 0.2;
  RigPose pose;
  pose.position = {0, 0, scene.terrain.height_at(0, 0) + 1.0};
  pose.pitch = -0.35;
  const StereoFrame f = render_depth(scene, rig.intrinsics, pose);
  const Eigen::Matrix3d r = pose.camera_to_world();
  const CameraIntrinsics& k = rig.intrinsics;

  int checked = 0, on_surface = 0, boulder_px = 0;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const double z = f.gt_depth_left(y, x);
      if (!std::isfinite(z)) continue;
      const Eigen::Vector3d pc((x + 0.5 - k.cx_px) * z / k.focal_px,
                               (y + 0.5 - k.cy_px) * z / k.focal_px, z);
      const Eigen::Vector3d pw = pose.position + r * pc;
      const int label = f.gt_label_left(y, x);
      ++checked;
      bool ok = false;
      if (label == kTerrainId) {
        ok = std::abs(pw.z() - scene.terrain.height_at(pw.x(), pw.y())) < 1e-3;
      } else if (label > 0) {
        ++boulder_px;
        const Boulder& b = scene.boulders[std::size_t(label - 1)];
        ok = std::abs((pw - b.center).cwiseQuotient(b.radii).squaredNorm() - 1.0) < 1e-3;
      }
      if (ok) ++on_surface;
    }
  }
  REQUIRE(checked > 0);
  CHECK(boulder_px > 0);
  CHECK(double(on_surface) / checked >= 0.99);
}

TEST_CASE("a boulder occludes the terrain behind it") {
  SceneDescription scene = flat_scene();
  Boulder b;
  b.center = {5, 0, 0.5};
  b.radii = {0.5, 0.5, 0.5};
  scene.boulders.push_back(b);
  const CameraIntrinsics k = CameraIntrinsics::from_fov(32, 32, 40, 40);
  RigPose pose;
  pose.position = {0, 0, 0.5};
  const StereoFrame f = render_depth(scene, k, pose);
  CHECK(f.gt_label_left(16, 16) == boulder_label(0));
  CHECK(f.gt_depth_left(16, 16) == doctest::Approx(4.5).epsilon(1e-3));

  const auto hit = raycast(scene, {0, 0, 0.5}, {1, 0, 0});
  REQUIRE(hit);
  CHECK(hit->label == boulder_label(0));
  CHECK(hit->t == doctest::Approx(4.5));
}

TEST_CASE("camera below terrain or inside a boulder is rejected") {
  SceneDescription scene = flat_scene();
  const CameraIntrinsics k = CameraIntrinsics::from_fov(16, 16, 60, 60);
  RigPose pose;
  pose.position = {0, 0, -0.1};
  CHECK_THROWS_AS(render_depth(scene, k, pose), DomainError);
  Boulder b;
  b.center = {0, 0, 1};
  scene.boulders.push_back(b);
  pose.position = {0, 0, 1.2};
  CHECK_THROWS_AS(render_depth(scene, k, pose), DomainError);
}

TEST_CASE("render is deterministic") {
  SceneDescription scene;
  scene.terrain = generate_terrain(4, {20, 20}, 0.5, 0.3);
  scene.boulders = place_boulders(scene.terrain, 5, 4, {0.2, 0.4});
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(48, 48, 60, 60);
  rig.baseline = 0.2;
  RigPose pose;
  pose.position = {-5, 0, scene.terrain.height_at(-5, 0) + 1};
  pose.pitch = -0.3;
  const StereoFrame a = render_stereo(scene, rig, pose);
  const StereoFrame b = render_stereo(scene, rig, pose);
  CHECK(a.left == b.left);
  CHECK(a.right == b.right);
  CHECK(a.gt_depth_left == b.gt_depth_left);
}

TEST_CASE("scene JSON round trip") {
  SceneDescription scene;
  scene.terrain = generate_terrain(8, {12, 10}, 0.5, 0.25);
  scene.boulders = place_boulders(scene.terrain, 9, 3, {0.1, 0.3});
  scene.texture_scale = 0.02;
  const SceneDescription back = scene_from_json(scene_to_json(scene));
  CHECK(back.terrain.heightmap == scene.terrain.heightmap);
  REQUIRE(back.boulders.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back.boulders[k].center.isApprox(scene.boulders[k].center));
    CHECK(back.boulders[k].radii.isApprox(scene.boulders[k].radii));
  }
  CHECK(back.sun_direction.isApprox(scene.sun_direction));
  CHECK(back.texture_scale == 0.02);
  CHECK(scene_to_json(back) == scene_to_json(scene));

  nlohmann::json bad = scene_to_json(scene);
  bad["extent"] = {1, 2, 3};
  CHECK_THROWS_AS(scene_from_json(bad), DomainError);
}
