#include <doctest.h>

#include <algorithm>
#include <random>
#include <thread>

#include <unistd.h>

#include "depthrover/eval.hpp"
#include "depthrover/geometry.hpp"

using namespace depthrover;
namespace fs = std::filesystem;

namespace {

DepthMap filled(int w, int h, double z) {
  DepthMap d(w, h);
  d.values.setConstant(z);
  d.valid.setConstant(true);
  return d;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("depthrover_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("depth MAE on a hand-built pair") {
  DepthMap gt = filled(4, 1, 1.0);
  DepthMap est = filled(4, 1, 1.0);
  est.values(0, 0) = 1.2;
  est.values(0, 1) = 0.7;
  est.valid(0, 3) = false;
  const DepthEvalReport r = depth_mae(est, gt);
  CHECK_FALSE(r.empty);
  CHECK(r.count == 3);
  CHECK(r.mae == doctest::Approx((0.2 + 0.3 + 0.0) / 3));
  CHECK(r.rmse == doctest::Approx(std::sqrt((0.04 + 0.09) / 3)));
  CHECK(r.valid_fraction == doctest::Approx(0.75));
}

TEST_CASE("the depth band is inclusive") {
  DepthMap gt(4, 1);
  gt.values << 0.15, 2.0, 0.1499, 2.0001;
  gt.valid.setConstant(true);
  const DepthMap est = filled(4, 1, 1.0);
  const DepthEvalReport r = depth_mae(est, gt);
  CHECK(r.count == 2);
  CHECK(r.mae == doctest::Approx((0.85 + 1.0) / 2));
  CHECK(r.bins.size() == 8);
  CHECK(r.bins.front().count == 1);
  CHECK(r.bins.back().count == 1);
  CHECK(r.bins.front().center == doctest::Approx(0.275));
}

TEST_CASE("empty overlap gives an empty report") {
  DepthMap gt(3, 3), est = filled(3, 3, 1.0);
  const DepthEvalReport r = depth_mae(est, gt);
  CHECK(r.empty);
  CHECK(std::isnan(r.mae));
  CHECK(r.count == 0);
  const auto j = to_json(r);
  CHECK(j.at("mae_m").is_null());
  CHECK(j.at("empty") == true);
  CHECK_THROWS_AS(depth_mae(est, DepthMap(2, 2)), DomainError);
  CHECK_THROWS_AS(depth_mae(est, gt, {2.0, 1.0}), DomainError);
}

TEST_CASE("MAE is invariant under pixel permutation") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 2.5);
  const int n = 400;
  DepthMap gt(n, 1), est(n, 1);
  for (int i = 0; i < n; ++i) {
    gt.values(0, i) = u(rng);
    est.values(0, i) = u(rng);
    gt.valid(0, i) = rng() % 10 != 0;
    est.valid(0, i) = rng() % 10 != 0;
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  DepthMap gt2(n, 1), est2(n, 1);
  for (int i = 0; i < n; ++i) {
    gt2.values(0, i) = gt.values(0, perm[i]);
    gt2.valid(0, i) = gt.valid(0, perm[i]);
    est2.values(0, i) = est.values(0, perm[i]);
    est2.valid(0, i) = est.valid(0, perm[i]);
  }
  const auto a = depth_mae(est, gt), b = depth_mae(est2, gt2);
  CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
  CHECK(a.count == b.count);
  CHECK(a.valid_fraction == b.valid_fraction);
}

TEST_CASE("accumulating frames equals one concatenated frame") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 2.5);
  DepthMap g1(10, 1), e1(10, 1), g2(10, 1), e2(10, 1), g(20, 1), e(20, 1);
  for (int i = 0; i < 10; ++i) {
    g1.values(0, i) = g.values(0, i) = u(rng);
    e1.values(0, i) = e.values(0, i) = u(rng);
    g2.values(0, i) = g.values(0, 10 + i) = u(rng);
    e2.values(0, i) = e.values(0, 10 + i) = u(rng);
  }
  for (DepthMap* m : {&g1, &e1, &g2, &e2, &g, &e}) m->valid.setConstant(true);
  DepthErrorAccumulator acc;
  acc.add(e1, g1);
  acc.add(e2, g2);
  CHECK(acc.report().mae == doctest::Approx(depth_mae(e, g).mae));
}

TEST_CASE("point to polyline distance") {
  const std::vector<Eigen::Vector2d> l = {{0, 0}, {2, 0}, {2, 2}};
  CHECK(point_polyline_distance({1, 1}, l) == doctest::Approx(1.0));
  CHECK(point_polyline_distance({3, 1}, l) == doctest::Approx(1.0));
  CHECK(point_polyline_distance({-1, 0}, l) == doctest::Approx(1.0));
  CHECK(point_polyline_distance({3, 3}, l) == doctest::Approx(std::sqrt(2.0)));
  CHECK(point_polyline_distance({5, 5}, {{1, 1}}) == doctest::Approx(std::sqrt(32.0)));
  CHECK(point_segment_distance({1, 1}, {0, 0}, {0, 0}) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(point_polyline_distance({0, 0}, {}), DomainError);
}

TEST_CASE("navigation metrics against a brute-force distance") {
  // L-shaped intended route; brute force samples each segment densely.
  const std::vector<Eigen::Vector2d> l = {{0, 0}, {3, 0}, {3, 2}};
  const auto brute = [&](Eigen::Vector2d p) {
    double best = 1e300;
    for (std::size_t i = 0; i + 1 < l.size(); ++i)
      for (int k = 0; k <= 20000; ++k)
        best = std::min(best, (p - (l[i] + (l[i + 1] - l[i]) * (k / 20000.0))).norm());
    return best;
  };
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 4);
  ExecutionReport r;
  double sum = 0;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d p(u(rng), u(rng));
    r.trajectory.push_back({0.1 * i, p.x(), p.y(), 0, false});
    sum += brute(p);
  }
  r.completed = true;
  r.elapsed = 4.9;
  r.halt_events.push_back({1.0, "x", {0, 0}});
  const NavReport nav = nav_metrics(r, l);
  CHECK(nav.path_deviation == doctest::Approx(sum / 50).epsilon(1e-6));
  CHECK(nav.completion);
  CHECK(nav.time_s == 4.9);
  CHECK(nav.halt_count == 1);
  CHECK(to_json(nav).at("halt_count") == 1);
  CHECK_THROWS_AS(nav_metrics(ExecutionReport{}, l), DomainError);
}

TEST_CASE("telemetry stays in its band and is reproducible") {
  TelemetrySource a(3, true), b(3, true);
  for (int i = 0; i < 2000; ++i) {
    const Telemetry ta = a.sample(i), tb = b.sample(i);
    CHECK(ta.synthetic_temp_c >= 40.0);
    CHECK(ta.synthetic_temp_c <= 65.0);
    CHECK(ta.cpu_load >= 0.0);
    CHECK(ta.cpu_load <= 1.0);
    CHECK(ta.synthetic_temp_c == tb.synthetic_temp_c);
  }
  TelemetrySource live(1, false);
  const Telemetry t = live.sample(0);
  CHECK(t.memory_mb > 0);
  CHECK_THROWS_AS(TelemetrySource(1, true, {70, 60}), DomainError);
}

TEST_CASE("session logger writes index and events") {
  TempDir tmp("logger");
  {
    SessionLogger log(tmp.path, "r1", {{"note", "unit"}});
    CHECK(fs::exists(tmp.path / "r1" / "index.json"));
    log.log_rgb(0.0, GrayImage::Constant(4, 4, 7));
    log.log_depth(0.5, filled(4, 4, 1.0), filled(4, 4, 1.1), 0.0);
    log.log_depth(0.6, filled(4, 4, 1.0), std::nullopt, 0.1);
    log.log_detections(0.0, 1, {Detection{}});
    log.log_telemetry({0.0, 0.5, 100, 45});
    log.log_pose(0.0, RoverState{});
    CHECK(log.record_count() == 6);
    CHECK_THROWS_AS(log.log_pose(-1.0, RoverState{}), DomainError);
    log.finalize({{"completed", true}});
  }
  const fs::path dir = tmp.path / "r1";
  CHECK(count_lines(dir / "events.jsonl") == 6);
  CHECK(fs::exists(dir / "rgb" / "000001.png"));
  CHECK(fs::exists(dir / "depth" / "000001.pfm"));
  CHECK(fs::exists(dir / "depth" / "000001_gt.pfm"));
  CHECK_FALSE(fs::exists(dir / "depth" / "000002_gt.pfm"));
  std::ifstream in(dir / "index.json");
  const auto index = nlohmann::json::parse(in);
  CHECK(index.at("run_id") == "r1");
  CHECK(index.at("record_count") == 6);
  CHECK(index.at("metadata").at("note") == "unit");
  CHECK(index.at("metadata").at("completed") == true);
}

TEST_CASE("an empty session still has an index") {
  TempDir tmp("empty");
  { SessionLogger log(tmp.path, "empty"); }
  const ReplayedRun run = load_session(tmp.path / "empty");
  CHECK(run.index.at("record_count") == 0);
  CHECK(run.execution.trajectory.empty());
  const auto j = evaluate_run(tmp.path / "empty");
  CHECK(j.at("nav").is_null());
  CHECK(j.at("depth").at("empty") == true);
}

TEST_CASE("concurrent producers keep every record") {
  TempDir tmp("threads");
  SessionLogger log(tmp.path, "mt");
  std::thread a([&] {
    for (int i = 0; i < 200; ++i) log.log_pose(0.01 * i, RoverState{});
  });
  std::thread b([&] {
    for (int i = 0; i < 200; ++i) log.log_detections(0.01 * i, std::uint64_t(i), {});
  });
  a.join();
  b.join();
  log.finalize();
  CHECK(log.record_count() == 400);
  CHECK(count_lines(tmp.path / "mt" / "events.jsonl") == 400);
}

TEST_CASE("replay reproduces the logged run") {
  TempDir tmp("replay");
  ExecutionReport exec;
  const std::vector<Eigen::Vector2d> intended = {{0, 0}, {1, 0}};
  {
    nlohmann::json meta = {{"intended", {{0, 0}, {1, 0}}}};
    SessionLogger log(tmp.path, "rp", meta);
    RoverState s;
    for (int i = 0; i < 10; ++i) {
      s.position = {0.1 * i, 0.01 * (i % 3)};
      s.heading = 0.01 * i;
      if (i == 7) s = halt(s, "obstacle");
      log.log_pose(0.1 * i, s);
      exec.trajectory.push_back({0.1 * i, s.position.x(), s.position.y(), s.heading, s.halted});
    }
    DepthMap est = filled(5, 5, 1.0), gt = filled(5, 5, 1.25);
    log.log_depth(0.7, est, gt, 0.0);
    log.finalize({{"completed", false}, {"elapsed_s", 0.9}});
  }
  const ReplayedRun run = load_session(tmp.path / "rp");
  REQUIRE(run.execution.trajectory.size() == exec.trajectory.size());
  for (std::size_t i = 0; i < exec.trajectory.size(); ++i) {
    CHECK(run.execution.trajectory[i].x == doctest::Approx(exec.trajectory[i].x));
    CHECK(run.execution.trajectory[i].halted == exec.trajectory[i].halted);
  }
  REQUIRE(run.execution.halt_events.size() == 1);
  CHECK(run.execution.halt_events[0].reason == "obstacle");
  CHECK(run.intended == intended);
  REQUIRE(run.depth_pairs.size() == 1);

  const auto j = evaluate_run(tmp.path / "rp");
  CHECK(j.at("depth").at("mae_m").get<double>() == doctest::Approx(0.25));
  CHECK(j.at("nav").at("halt_count") == 1);
  CHECK(j.at("nav").at("completion") == false);
  CHECK(j.at("nav").at("time_s") == 0.9);
  exec.elapsed = 0.9;
  exec.halt_events.push_back({0.7, "obstacle", {0.7, 0.01}});
  CHECK(j.at("nav").at("path_deviation_m").get<double>() ==
        doctest::Approx(nav_metrics(exec, intended).path_deviation));
}

TEST_CASE("missing run directory is an I/O error") {
  CHECK_THROWS_AS(load_session("/nonexistent/run"), IoError);
}
