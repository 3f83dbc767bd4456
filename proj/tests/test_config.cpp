#include <doctest.h>

#include <fstream>

#include <unistd.h>

#include "depthrover/config.hpp"

using namespace depthrover;

TEST_CASE("defaults validate and survive a JSON round trip") {
  const AppConfig c;
  CHECK_NOTHROW(c.validate());
  const AppConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_from_json(nlohmann::json::object()).sgm.p2 == c.sgm.p2);
}

TEST_CASE("overrides are applied per section") {
  const auto j = nlohmann::json::parse(R"({
    "scene": {"seed": 3, "extent": [8, 6], "boulder_count": 2},
    "sgm": {"num_disparities": 32, "num_paths": 4},
    "schedule": {"depth_latency": 12, "overlap_policy": "queue_one", "clock": "real"},
    "rover": {"wheel_speed": 0.2, "start": [1, 2, 0.5]},
    "safety": {"stop_range": 0.8},
    "server": {"port": 9000}
  })");
  const AppConfig c = config_from_json(j);
  CHECK(c.scene.seed == 3);
  CHECK(c.scene.extent == Eigen::Vector2d(8, 6));
  CHECK(c.sgm.num_disparities == 32);
  CHECK(c.sgm.num_paths == 4);
  CHECK(c.schedule.depth_latency == 12.0);
  CHECK(c.schedule.overlap_policy == OverlapPolicy::queue_one);
  CHECK(c.schedule.clock == ClockKind::real);
  CHECK(c.drive.wheel_speed == 0.2);
  CHECK(c.mount.start == Eigen::Vector3d(1, 2, 0.5));
  CHECK(c.safety.stop_range == 0.8);
  CHECK(c.server.port == 9000);
  const AppConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("census window sets default penalties") {
  const AppConfig c = config_from_json(nlohmann::json::parse(R"({"sgm": {"census_width": 3, "census_height": 3}})"));
  CHECK(c.sgm.p1 == 8);
  CHECK(c.sgm.p2 == 32);
  const AppConfig d = config_from_json(
      nlohmann::json::parse(R"({"sgm": {"census_width": 3, "census_height": 3, "p2": 50}})"));
  CHECK(d.sgm.p2 == 50);
}

TEST_CASE("monodepth latency drives the schedule") {
  const AppConfig c = config_from_json(nlohmann::json::parse(R"({"monodepth": {"latency": 3.5}})"));
  CHECK(c.monodepth.latency == 3.5);
  CHECK(c.schedule.depth_latency == 3.5);
}

TEST_CASE("paper mode rig") {
  const AppConfig c = config_from_json(nlohmann::json::parse(R"({"rig": {"paper_mode": true, "units_per_meter": 600}})"));
  CHECK(c.rig.width == 500);
  CHECK(c.rig.height == 500);
  CHECK(c.rig.baseline == 24.0);
  CHECK(c.rig.units_per_meter == 600.0);
  const StereoRig rig = c.rig.build();
  CHECK(std::abs(rig.intrinsics.focal_px - 433.0) <= 0.05);
}

TEST_CASE("invalid configs are rejected") {
  const auto bad = [](const char* text) { return config_from_json(nlohmann::json::parse(text)); };
  CHECK_THROWS_AS(bad(R"({"sgm": {"bogus": 1}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"nonsense": {}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"sgm": {"num_disparities": "many"}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"sgm": {"num_disparities": 20}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schedule": {"overlap_policy": "maybe"}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schedule": {"detection_rate": 0}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"rig": {"fov_v_deg": 30}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"safety": {"corridor_halfwidth": 0.9}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"([1, 2])"), ConfigError);
}

TEST_CASE("scene config builds a deterministic scene") {
  SceneConfig sc;
  const SceneDescription a = sc.build(), b = sc.build();
  CHECK(a.terrain.heightmap == b.terrain.heightmap);
  CHECK(a.boulders.size() == std::size_t(sc.boulder_count));
  sc.boulders = std::vector<Boulder>{Boulder{}};
  CHECK(sc.build().boulders.size() == 1);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / ("depthrover_cfg_" + std::to_string(::getpid()) + ".json");
  {
    std::ofstream out(path);
    out << R"({"detector": {"near_threshold": 0.7}})";
  }
  CHECK(load_config(path).detector.near_threshold == 0.7);
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_config(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), IoError);
}
