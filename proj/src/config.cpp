#include "depthrover/config.hpp"

#include <fstream>
#include <set>

namespace depthrover {
namespace {

Eigen::Vector2d vec2(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

Eigen::Vector3d vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json arr(const Eigen::Vector2d& v) { return {v.x(), v.y()}; }
nlohmann::json arr(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

// Reads the keys of one config section and rejects any it did not consume.
class Section {
 public:
  Section(const nlohmann::json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      j_ = root.at(name_);
      if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  void get_vec2(const std::string& key, Eigen::Vector2d& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    out = vec2(j_.at(key));
  }

  void get_vec3(const std::string& key, Eigen::Vector3d& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    out = vec3(j_.at(key));
  }

  const nlohmann::json* raw(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) throw ConfigError("unknown config key " + name_ + "." + item.key());
  }

 private:
  std::string name_;
  nlohmann::json j_ = nlohmann::json::object();
  std::set<std::string> used_;
};

}  // namespace

SceneDescription SceneConfig::build() const {
  SceneDescription scene;
  scene.terrain = generate_terrain(seed, extent, cell_size, roughness);
  if (boulders) {
    scene.boulders = *boulders;
    for (std::size_t i = 0; i < scene.boulders.size(); ++i) scene.boulders[i].id = int(i);
  } else {
    scene.boulders = place_boulders(scene.terrain, seed + 1, boulder_count, boulder_radius, boulder_region);
  }
  scene.sun_direction = sun_direction.normalized();
  scene.albedo = albedo;
  scene.texture_amplitude = texture_amplitude;
  scene.texture_scale = texture_scale;
  scene.ambient = ambient;
  scene.validate();
  return scene;
}

RigConfig RigConfig::paper_mode(double units_per_meter) {
  RigConfig r;
  r.baseline = 24.0;
  r.units_per_meter = units_per_meter;
  return r;
}

StereoRig RigConfig::build() const {
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(width, height, fov_h_deg, fov_v_deg);
  rig.baseline = baseline;
  rig.units_per_meter = units_per_meter;
  rig.validate();
  return rig;
}

void MountConfig::validate() const {
  if (!(camera_height > 0)) throw ConfigError("rover.camera_height must be positive");
  if (!(camera_pitch_deg > -90 && camera_pitch_deg < 90))
    throw ConfigError("rover.camera_pitch_deg must lie in (-90, 90)");
  if (detection_width < 2 || detection_height < 2 || depth_width < 2 || depth_height < 2)
    throw ConfigError("channel resolutions must be at least 2x2");
  if (!(obstacle_min_height >= 0)) throw ConfigError("rover.obstacle_min_height must be non-negative");
}

void ServerConfig::validate() const {
  if (!(frame_rate_limit > 0)) throw ConfigError("server.frame_rate_limit must be positive");
  if (frame_format != "png") throw ConfigError("server.frame_format must be \"png\"");
}

void AppConfig::validate() const {
  try {
    rig.build();
    sgm.validate();
    detector.validate();
    schedule.validate();
    drive.validate();
    safety.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  monodepth.validate();
  mount.validate();
  server.validate();
}

AppConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections = {"scene",    "rig",    "sgm",
                                                  "monodepth", "detector", "schedule",
                                                  "rover",    "safety", "server"};
  for (const auto& item : j.items())
    if (!kSections.count(item.key())) throw ConfigError("unknown config section " + item.key());

  AppConfig c;
  {
    Section s(j, "scene");
    s.get("seed", c.scene.seed);
    s.get_vec2("extent", c.scene.extent);
    s.get("cell_size", c.scene.cell_size);
    s.get("roughness", c.scene.roughness);
    s.get("boulder_count", c.scene.boulder_count);
    s.get_vec2("boulder_radius", c.scene.boulder_radius);
    if (const auto* region = s.raw("boulder_region")) {
      if (region->contains("min")) c.scene.boulder_region.min = vec2(region->at("min"));
      if (region->contains("max")) c.scene.boulder_region.max = vec2(region->at("max"));
      c.scene.boulder_region.min_gap = region->value("min_gap", c.scene.boulder_region.min_gap);
    }
    if (const auto* list = s.raw("boulders")) {
      std::vector<Boulder> boulders;
      for (const auto& jb : *list) {
        Boulder b;
        b.center = vec3(jb.at("center"));
        b.radii = vec3(jb.at("radii"));
        boulders.push_back(b);
      }
      c.scene.boulders = boulders;
    }
    s.get_vec3("sun_direction", c.scene.sun_direction);
    s.get("albedo", c.scene.albedo);
    s.get("texture_amplitude", c.scene.texture_amplitude);
    s.get("texture_scale", c.scene.texture_scale);
    s.get("ambient", c.scene.ambient);
    s.finish();
  }
  {
    Section s(j, "rig");
    bool paper = false;
    s.get("paper_mode", paper);
    if (paper) {
      double upm = c.rig.units_per_meter;
      s.get("units_per_meter", upm);
      c.rig = RigConfig::paper_mode(upm);
    }
    s.get("width", c.rig.width);
    s.get("height", c.rig.height);
    s.get("fov_h_deg", c.rig.fov_h_deg);
    s.get("fov_v_deg", c.rig.fov_v_deg);
    s.get("baseline", c.rig.baseline);
    s.get("units_per_meter", c.rig.units_per_meter);
    s.finish();
  }
  {
    Section s(j, "sgm");
    int cw = c.sgm.census_width, ch = c.sgm.census_height;
    s.get("census_width", cw);
    s.get("census_height", ch);
    if (cw != c.sgm.census_width || ch != c.sgm.census_height) {
      const SgmParams d = default_sgm_params(cw, ch);
      c.sgm.census_width = cw;
      c.sgm.census_height = ch;
      c.sgm.p1 = d.p1;
      c.sgm.p2 = d.p2;
    }
    s.get("num_disparities", c.sgm.num_disparities);
    s.get("p1", c.sgm.p1);
    s.get("p2", c.sgm.p2);
    s.get("num_paths", c.sgm.num_paths);
    s.get("uniqueness_ratio", c.sgm.uniqueness_ratio);
    s.get("lr_max_diff", c.sgm.lr_max_diff);
    s.get("speckle_window", c.sgm.speckle_window);
    s.get("speckle_range", c.sgm.speckle_range);
    s.finish();
  }
  {
    Section s(j, "monodepth");
    s.get("backend", c.monodepth.backend);
    s.get("max_range", c.monodepth.max_range);
    s.get("latency", c.monodepth.latency);
    s.get("noise_sigma", c.monodepth.noise_sigma);
    s.get("seed", c.monodepth.seed);
    s.finish();
    c.schedule.depth_latency = c.monodepth.latency;
  }
  {
    Section s(j, "detector");
    s.get("near_threshold", c.detector.near_threshold);
    s.get("confidence_threshold", c.detector.confidence_threshold);
    s.get("nms_iou_threshold", c.detector.nms_iou_threshold);
    s.get("min_area", c.detector.min_area);
    s.get("period", c.detector.period_hz);
    s.finish();
    c.schedule.detection_rate = c.detector.period_hz;
  }
  {
    Section s(j, "schedule");
    s.get("detection_rate", c.schedule.detection_rate);
    s.get("depth_rate", c.schedule.depth_rate);
    s.get("depth_latency", c.schedule.depth_latency);
    std::string policy = c.schedule.overlap_policy == OverlapPolicy::drop ? "drop" : "queue_one";
    s.get("overlap_policy", policy);
    if (policy == "drop")
      c.schedule.overlap_policy = OverlapPolicy::drop;
    else if (policy == "queue_one")
      c.schedule.overlap_policy = OverlapPolicy::queue_one;
    else
      throw ConfigError("schedule.overlap_policy must be \"drop\" or \"queue_one\"");
    std::string clock = c.schedule.clock == ClockKind::simulated ? "simulated" : "real";
    s.get("clock", clock);
    if (clock == "simulated")
      c.schedule.clock = ClockKind::simulated;
    else if (clock == "real")
      c.schedule.clock = ClockKind::real;
    else
      throw ConfigError("schedule.clock must be \"simulated\" or \"real\"");
    s.finish();
  }
  {
    Section s(j, "rover");
    s.get("wheel_speed", c.drive.wheel_speed);
    s.get("track_width", c.drive.track_width);
    s.get("camera_height", c.mount.camera_height);
    s.get("camera_pitch_deg", c.mount.camera_pitch_deg);
    s.get("detection_width", c.mount.detection_width);
    s.get("detection_height", c.mount.detection_height);
    s.get("depth_width", c.mount.depth_width);
    s.get("depth_height", c.mount.depth_height);
    s.get("obstacle_min_height", c.mount.obstacle_min_height);
    s.get_vec3("start", c.mount.start);
    s.finish();
  }
  {
    Section s(j, "safety");
    s.get("stop_range", c.safety.stop_range);
    s.get("corridor_halfwidth", c.safety.corridor_halfwidth);
    s.finish();
  }
  {
    Section s(j, "server");
    s.get("address", c.server.address);
    s.get("port", c.server.port);
    s.get("frame_rate_limit", c.server.frame_rate_limit);
    s.get("frame_format", c.server.frame_format);
    s.get("paths_dir", c.server.paths_dir);
    s.finish();
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const AppConfig& c) {
  nlohmann::json scene = {{"seed", c.scene.seed},
                          {"extent", arr(c.scene.extent)},
                          {"cell_size", c.scene.cell_size},
                          {"roughness", c.scene.roughness},
                          {"boulder_count", c.scene.boulder_count},
                          {"boulder_radius", arr(c.scene.boulder_radius)},
                          {"boulder_region",
                           {{"min", arr(c.scene.boulder_region.min)},
                            {"max", arr(c.scene.boulder_region.max)},
                            {"min_gap", c.scene.boulder_region.min_gap}}},
                          {"sun_direction", arr(c.scene.sun_direction)},
                          {"albedo", c.scene.albedo},
                          {"texture_amplitude", c.scene.texture_amplitude},
                          {"texture_scale", c.scene.texture_scale},
                          {"ambient", c.scene.ambient}};
  if (c.scene.boulders) {
    nlohmann::json list = nlohmann::json::array();
    for (const Boulder& b : *c.scene.boulders)
      list.push_back({{"center", arr(b.center)}, {"radii", arr(b.radii)}});
    scene["boulders"] = list;
  }
  return {
      {"scene", scene},
      {"rig",
       {{"width", c.rig.width},
        {"height", c.rig.height},
        {"fov_h_deg", c.rig.fov_h_deg},
        {"fov_v_deg", c.rig.fov_v_deg},
        {"baseline", c.rig.baseline},
        {"units_per_meter", c.rig.units_per_meter}}},
      {"sgm",
       {{"num_disparities", c.sgm.num_disparities},
        {"census_width", c.sgm.census_width},
        {"census_height", c.sgm.census_height},
        {"p1", c.sgm.p1},
        {"p2", c.sgm.p2},
        {"num_paths", c.sgm.num_paths},
        {"uniqueness_ratio", c.sgm.uniqueness_ratio},
        {"lr_max_diff", c.sgm.lr_max_diff},
        {"speckle_window", c.sgm.speckle_window},
        {"speckle_range", c.sgm.speckle_range}}},
      {"monodepth",
       {{"backend", c.monodepth.backend},
        {"max_range", c.monodepth.max_range},
        {"latency", c.monodepth.latency},
        {"noise_sigma", c.monodepth.noise_sigma},
        {"seed", c.monodepth.seed}}},
      {"detector",
       {{"near_threshold", c.detector.near_threshold},
        {"confidence_threshold", c.detector.confidence_threshold},
        {"nms_iou_threshold", c.detector.nms_iou_threshold},
        {"min_area", c.detector.min_area},
        {"period", c.detector.period_hz}}},
      {"schedule",
       {{"detection_rate", c.schedule.detection_rate},
        {"depth_rate", c.schedule.depth_rate},
        {"depth_latency", c.schedule.depth_latency},
        {"overlap_policy", c.schedule.overlap_policy == OverlapPolicy::drop ? "drop" : "queue_one"},
        {"clock", c.schedule.clock == ClockKind::simulated ? "simulated" : "real"}}},
      {"rover",
       {{"wheel_speed", c.drive.wheel_speed},
        {"track_width", c.drive.track_width},
        {"camera_height", c.mount.camera_height},
        {"camera_pitch_deg", c.mount.camera_pitch_deg},
        {"detection_width", c.mount.detection_width},
        {"detection_height", c.mount.detection_height},
        {"depth_width", c.mount.depth_width},
        {"depth_height", c.mount.depth_height},
        {"obstacle_min_height", c.mount.obstacle_min_height},
        {"start", arr(c.mount.start)}}},
      {"safety", {{"stop_range", c.safety.stop_range}, {"corridor_halfwidth", c.safety.corridor_halfwidth}}},
      {"server",
       {{"address", c.server.address},
        {"port", c.server.port},
        {"frame_rate_limit", c.server.frame_rate_limit},
        {"frame_format", c.server.frame_format},
        {"paths_dir", c.server.paths_dir}}},
  };
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

AppConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

}  // namespace depthrover
