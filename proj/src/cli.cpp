#include "depthrover/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "depthrover/config.hpp"
#include "depthrover/eval.hpp"
#include "depthrover/protocol.hpp"
#include "depthrover/server.hpp"
#include "depthrover/simulation.hpp"

namespace depthrover {
namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

template <typename T>
void override(T& target, const std::optional<T>& value) {
  if (value) target = *value;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-")
    std::cout << text;
  else
    write_text(out_path, text);
}

/// Flags shared by every subcommand that builds an AppConfig.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<bool> paper_mode;
  std::optional<double> units_per_meter;
  std::optional<double> baseline;
  std::optional<int> width, height;
  std::optional<double> fov_h, fov_v;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "scene seed");
    app->add_flag("--paper-mode", paper_mode, "500x500, 60 deg, 24-unit baseline rig");
    app->add_option("--units-per-meter", units_per_meter, "scene units per meter");
    app->add_option("--baseline", baseline, "stereo baseline, scene units");
    app->add_option("--width", width, "image width, px");
    app->add_option("--height", height, "image height, px");
    app->add_option("--fov-h", fov_h, "horizontal field of view, deg");
    app->add_option("--fov-v", fov_v, "vertical field of view, deg");
  }

  AppConfig build() const {
    AppConfig c = config_path.empty() ? AppConfig{} : load_config(config_path);
    if (paper_mode && *paper_mode)
      c.rig = RigConfig::paper_mode(units_per_meter.value_or(c.rig.units_per_meter));
    override(c.scene.seed, seed);
    override(c.rig.units_per_meter, units_per_meter);
    override(c.rig.baseline, baseline);
    override(c.rig.width, width);
    override(c.rig.height, height);
    override(c.rig.fov_h_deg, fov_h);
    override(c.rig.fov_v_deg, fov_v);
    c.validate();
    return c;
  }
};

struct SgmFlags {
  std::optional<int> num_disparities, census_width, census_height, num_paths, speckle_window;
  std::optional<int> p1, p2, uniqueness;
  std::optional<double> lr_max_diff, speckle_range;

  void add(CLI::App* app) {
    app->add_option("--num-disparities", num_disparities, "disparity search range (multiple of 16)");
    app->add_option("--census-width", census_width, "census window width (odd)");
    app->add_option("--census-height", census_height, "census window height (odd)");
    app->add_option("--p1", p1, "small smoothness penalty");
    app->add_option("--p2", p2, "large smoothness penalty");
    app->add_option("--paths", num_paths, "aggregation paths (4 or 8)");
    app->add_option("--uniqueness", uniqueness, "uniqueness ratio, percent");
    app->add_option("--lr-max-diff", lr_max_diff, "left-right tolerance, px; negative disables");
    app->add_option("--speckle-window", speckle_window, "minimum region size, px; 0 disables");
    app->add_option("--speckle-range", speckle_range, "disparity step within a region, px");
  }

  void apply(SgmParams& p) const {
    if (census_width || census_height) {
      const SgmParams d = default_sgm_params(census_width.value_or(p.census_width),
                                             census_height.value_or(p.census_height));
      p.census_width = d.census_width;
      p.census_height = d.census_height;
      p.p1 = d.p1;
      p.p2 = d.p2;
    }
    override(p.num_disparities, num_disparities);
    override(p.p1, p1);
    override(p.p2, p2);
    override(p.num_paths, num_paths);
    override(p.uniqueness_ratio, uniqueness);
    override(p.lr_max_diff, lr_max_diff);
    override(p.speckle_window, speckle_window);
    override(p.speckle_range, speckle_range);
    p.validate();
  }
};

// Perception world with nothing in it, for pure scheduler traces.
class NullWorld final : public PerceptionWorld {
 public:
  std::vector<Detection> detect(double) override { return {}; }
  std::function<MonoDepthResult()> capture_depth(double) override {
    return [] { return MonoDepthResult{}; };
  }
};

int cmd_render(const ConfigFlags& flags, const std::string& out_dir, std::optional<double> x,
               std::optional<double> y, std::optional<double> heading) {
  const AppConfig c = flags.build();
  const SceneDescription scene = c.scene.build();
  const StereoRig rig = c.rig.build();
  RoverState state = initial_state(c.mount);
  override(state.position.x(), x);
  override(state.position.y(), y);
  if (heading) state.heading = wrap_angle(*heading);
  const StereoFrame frame = render_stereo(scene, rig, camera_pose(scene, c.mount, state));

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_png(dir / "left.png", frame.left);
  write_png(dir / "right.png", frame.right);
  write_depth_pfm(dir / "depth_gt.pfm", gt_depth_meters(frame, rig.units_per_meter));
  GrayImage labels(frame.height(), frame.width());
  for (int r = 0; r < frame.height(); ++r)
    for (int col = 0; col < frame.width(); ++col)
      labels(r, col) = std::uint8_t(std::clamp(frame.gt_label_left(r, col) + 1, 0, 255));
  write_png(dir / "labels.png", labels);
  write_text(dir / "scene.json", scene_to_json(scene).dump(2) + "\n");
  write_text(dir / "rig.json", nlohmann::json{{"focal_px", rig.intrinsics.focal_px},
                                              {"baseline", rig.baseline},
                                              {"units_per_meter", rig.units_per_meter},
                                              {"width", rig.intrinsics.width_px},
                                              {"height", rig.intrinsics.height_px}}
                                       .dump(2) + "\n");
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_match(const ConfigFlags& flags, const SgmFlags& sgm_flags, const std::string& left_path,
              const std::string& right_path, const std::string& out, const std::string& depth_out) {
  const GrayImage left = read_png(left_path);
  const GrayImage right = read_png(right_path);
  if (left.rows() != right.rows() || left.cols() != right.cols())
    throw DomainError("left and right images differ in size");

  AppConfig c = flags.config_path.empty() ? AppConfig{} : load_config(flags.config_path);
  if (flags.paper_mode && *flags.paper_mode)
    c.rig = RigConfig::paper_mode(flags.units_per_meter.value_or(c.rig.units_per_meter));
  override(c.rig.units_per_meter, flags.units_per_meter);
  override(c.rig.baseline, flags.baseline);
  override(c.rig.fov_h_deg, flags.fov_h);
  // The rig always takes its size from the images, with square pixels.
  c.rig.width = int(left.cols());
  c.rig.height = int(left.rows());
  const double f = focal_from_fov(c.rig.fov_h_deg, c.rig.width);
  c.rig.fov_v_deg = 2.0 * std::atan(0.5 * c.rig.height / f) * 180.0 / std::numbers::pi;
  SgmParams params = c.sgm;
  sgm_flags.apply(params);

  const StereoRig rig = c.rig.build();
  const StereoResult result = match_images(rig, left, right, params);
  write_pfm(out, result.disparity.values);
  if (!depth_out.empty()) write_depth_pfm(depth_out, to_meters(result.depth, rig.units_per_meter));
  std::cout << nlohmann::json{{"valid_fraction", result.disparity.valid_fraction()},
                              {"width", result.disparity.width()},
                              {"height", result.disparity.height()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_simulate(const ConfigFlags& flags, const std::string& plan_path, const std::string& runs_dir,
                 const std::string& run_id) {
  const AppConfig c = flags.build();
  const PathPlan plan = plan_path.empty() ? default_plan(c) : path_from_json(read_json_file(plan_path));
  const SimulationResult r = run_simulation(c, plan, runs_dir, run_id);
  std::cout << nlohmann::json{{"run_dir", r.run_dir.string()},
                              {"completed", r.execution.completed},
                              {"halt_events", r.execution.halt_events.size()},
                              {"nav", to_json(r.nav)}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir, double band_min, double band_max, const std::string& out) {
  if (!fs::is_directory(run_dir)) throw IoError("no run directory " + run_dir);
  if (!(band_min >= 0 && band_max > band_min)) throw DomainError("band must satisfy 0 <= min < max");
  emit(out, evaluate_run(run_dir, {band_min, band_max}).dump(2) + "\n");
  return 0;
}

int cmd_trace(const ConfigFlags& flags, double duration, std::optional<double> detection_rate,
              std::optional<double> depth_rate, std::optional<double> latency,
              std::optional<std::string> policy, const std::string& out) {
  AppConfig c = flags.build();
  override(c.schedule.detection_rate, detection_rate);
  override(c.schedule.depth_rate, depth_rate);
  override(c.schedule.depth_latency, latency);
  if (policy) c.schedule.overlap_policy = *policy == "queue_one" ? OverlapPolicy::queue_one : OverlapPolicy::drop;
  c.schedule.clock = ClockKind::simulated;
  NullWorld world;
  PerceptionPipeline pipeline(c.schedule, world);
  emit(out, pipeline.run(duration).to_jsonl());
  return 0;
}

int cmd_serve(const ConfigFlags& flags, std::optional<std::string> address,
              std::optional<unsigned short> port, std::optional<std::string> paths_dir) {
  AppConfig c = flags.build();
  override(c.server.address, address);
  override(c.server.port, port);
  override(c.server.paths_dir, paths_dir);
  TeleopServer server(c, c.scene.build());
  server.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on ws://" << c.server.address << ":" << server.port() << "/\n";
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Stereo and monocular depth rover simulator"};
  app.require_subcommand(1);

  ConfigFlags render_flags, match_flags, sim_flags, trace_flags, serve_flags;
  SgmFlags sgm_flags;

  auto* render = app.add_subcommand("render", "render a stereo pair with ground truth");
  render_flags.add(render);
  std::string render_out = "render";
  std::optional<double> rx, ry, rheading;
  render->add_option("-o,--out", render_out, "output directory");
  render->add_option("--x", rx, "rover x, scene units");
  render->add_option("--y", ry, "rover y, scene units");
  render->add_option("--heading", rheading, "rover heading, rad");

  auto* match = app.add_subcommand("match", "stereo pair to disparity and depth PFM");
  match_flags.add(match);
  sgm_flags.add(match);
  std::string left, right, disp_out, depth_out;
  match->add_option("--left", left, "left PNG")->required()->check(CLI::ExistingFile);
  match->add_option("--right", right, "right PNG")->required()->check(CLI::ExistingFile);
  match->add_option("-o,--out", disp_out, "disparity PFM")->required();
  match->add_option("--depth-out", depth_out, "depth PFM, meters");

  auto* simulate = app.add_subcommand("simulate", "headless run of a path plan");
  sim_flags.add(simulate);
  std::string plan_path, runs_dir = "runs", run_id = "run";
  simulate->add_option("--plan", plan_path, "path plan JSON")->check(CLI::ExistingFile);
  simulate->add_option("--runs-dir", runs_dir, "session log root");
  simulate->add_option("--run-id", run_id, "run directory name");

  auto* eval = app.add_subcommand("eval", "metrics for a logged run");
  std::string eval_run, eval_out;
  double band_min = 0.15, band_max = 2.0;
  eval->add_option("run", eval_run, "run directory")->required();
  eval->add_option("--band-min", band_min, "depth band lower edge, m");
  eval->add_option("--band-max", band_max, "depth band upper edge, m");
  eval->add_option("-o,--out", eval_out, "output JSON (default stdout)");

  auto* serve = app.add_subcommand("serve", "websocket teleoperation service");
  serve_flags.add(serve);
  std::optional<std::string> address, paths_dir;
  std::optional<unsigned short> port;
  serve->add_option("--address", address, "listen address");
  serve->add_option("--port", port, "listen port (0 picks one)");
  serve->add_option("--paths-dir", paths_dir, "directory of named path plans");

  auto* trace = app.add_subcommand("trace", "scheduler trace as JSONL");
  trace_flags.add(trace);
  double duration = 30.0;
  std::optional<double> det_rate, depth_rate, latency;
  std::optional<std::string> policy;
  std::string trace_out;
  trace->add_option("--duration", duration, "simulated seconds")->check(CLI::PositiveNumber);
  trace->add_option("--detection-rate", det_rate, "Hz");
  trace->add_option("--depth-rate", depth_rate, "Hz");
  trace->add_option("--latency", latency, "depth latency, s");
  trace->add_option("--policy", policy, "drop or queue_one")->check(CLI::IsMember({"drop", "queue_one"}));
  trace->add_option("-o,--out", trace_out, "output JSONL (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*render) return cmd_render(render_flags, render_out, rx, ry, rheading);
    if (*match) return cmd_match(match_flags, sgm_flags, left, right, disp_out, depth_out);
    if (*simulate) return cmd_simulate(sim_flags, plan_path, runs_dir, run_id);
    if (*eval) return cmd_eval(eval_run, band_min, band_max, eval_out);
    if (*serve) return cmd_serve(serve_flags, address, port, paths_dir);
    if (*trace) return cmd_trace(trace_flags, duration, det_rate, depth_rate, latency, policy, trace_out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace depthrover
