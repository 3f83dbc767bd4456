#include "depthrover/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "depthrover/geometry.hpp"

namespace depthrover {

namespace fs = std::filesystem;

DepthErrorAccumulator::DepthErrorAccumulator(std::pair<double, double> band, double bin_width)
    : band_(band), bin_width_(bin_width) {
  if (!(band.first < band.second)) throw DomainError("depth band must satisfy min < max");
  if (!(bin_width > 0)) throw DomainError("bin width must be positive");
  const auto n = std::size_t(std::ceil((band.second - band.first) / bin_width - 1e-9));
  bin_sum_.assign(std::max<std::size_t>(n, 1), 0.0);
  bin_count_.assign(bin_sum_.size(), 0);
}

void DepthErrorAccumulator::add(const DepthMap& estimate, const DepthMap& gt) {
  if (estimate.width() != gt.width() || estimate.height() != gt.height())
    throw DomainError("depth maps differ in size");
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!gt.valid(y, x)) continue;
      const double g = gt.values(y, x);
      if (g < band_.first || g > band_.second) continue;
      ++in_band_;
      if (!estimate.valid(y, x)) continue;
      const double e = estimate.values(y, x) - g;
      ++count_;
      abs_sum_ += std::abs(e);
      sq_sum_ += e * e;
      const auto bin = std::min(bin_sum_.size() - 1, std::size_t((g - band_.first) / bin_width_));
      bin_sum_[bin] += std::abs(e);
      ++bin_count_[bin];
    }
}

DepthEvalReport DepthErrorAccumulator::report() const {
  DepthEvalReport r;
  r.band = band_;
  r.count = count_;
  r.valid_fraction = in_band_ ? double(count_) / double(in_band_) : 0.0;
  for (std::size_t i = 0; i < bin_sum_.size(); ++i) {
    DepthBin b;
    b.center = band_.first + (double(i) + 0.5) * bin_width_;
    b.count = bin_count_[i];
    b.mae = b.count ? bin_sum_[i] / double(b.count) : std::numeric_limits<double>::quiet_NaN();
    r.bins.push_back(b);
  }
  if (count_ == 0) return r;
  r.empty = false;
  r.mae = abs_sum_ / double(count_);
  r.rmse = std::sqrt(sq_sum_ / double(count_));
  return r;
}

DepthEvalReport depth_mae(const DepthMap& estimate, const DepthMap& gt,
                          std::pair<double, double> band) {
  DepthErrorAccumulator acc(band);
  acc.add(estimate, gt);
  return acc.report();
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const DepthEvalReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const DepthBin& b : r.bins)
    bins.push_back({{"center_m", b.center}, {"mae_m", number_or_null(b.mae)}, {"count", b.count}});
  return {{"empty", r.empty},
          {"mae_m", number_or_null(r.mae)},
          {"rmse_m", number_or_null(r.rmse)},
          {"valid_fraction", r.valid_fraction},
          {"band_m", {r.band.first, r.band.second}},
          {"count", r.count},
          {"bins", bins}};
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + s * ab)).norm();
}

double point_polyline_distance(const Eigen::Vector2d& p,
                               const std::vector<Eigen::Vector2d>& polyline) {
  if (polyline.empty()) throw DomainError("intended polyline is empty");
  if (polyline.size() == 1) return (p - polyline.front()).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i)
    best = std::min(best, point_segment_distance(p, polyline[i], polyline[i + 1]));
  return best;
}

NavReport nav_metrics(const ExecutionReport& report, const std::vector<Eigen::Vector2d>& intended) {
  if (intended.empty()) throw DomainError("intended polyline is empty");
  if (report.trajectory.empty()) throw DomainError("trajectory is empty");
  NavReport nav;
  nav.completion = report.completed;
  nav.time_s = report.elapsed;
  nav.halt_count = int(report.halt_events.size());
  double sum = 0.0;
  for (const TrajectorySample& s : report.trajectory)
    sum += point_polyline_distance({s.x, s.y}, intended);
  nav.path_deviation = sum / double(report.trajectory.size());
  return nav;
}

nlohmann::json to_json(const NavReport& r) {
  return {{"completion", r.completion},
          {"time_s", r.time_s},
          {"path_deviation_m", r.path_deviation},
          {"halt_count", r.halt_count}};
}

TelemetrySource::TelemetrySource(std::uint64_t seed, bool synthetic_load,
                                 std::pair<double, double> temp_band)
    : rng_(seed), synthetic_load_(synthetic_load), band_(temp_band),
      temp_(0.5 * (temp_band.first + temp_band.second)), load_(0.4) {
  if (!(temp_band.first <= temp_band.second)) throw DomainError("temperature band is inverted");
}

namespace {

double read_memory_mb() {
  std::ifstream statm("/proc/self/statm");
  long pages = 0, resident = 0;
  if (!(statm >> pages >> resident)) return 0.0;
  return double(resident) * 4096.0 / (1024.0 * 1024.0);
}

double read_cpu_load() {
  std::ifstream loadavg("/proc/loadavg");
  double one_minute = 0.0;
  if (!(loadavg >> one_minute)) return 0.0;
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  return std::clamp(one_minute / cores, 0.0, 1.0);
}

}  // namespace

Telemetry TelemetrySource::sample(double t) {
  std::normal_distribution<double> step(0.0, 1.0);
  temp_ = std::clamp(temp_ + 0.3 * step(rng_), band_.first, band_.second);
  load_ = std::clamp(load_ + 0.02 * step(rng_), 0.05, 0.95);
  Telemetry out;
  out.timestamp = t;
  out.synthetic_temp_c = temp_;
  if (synthetic_load_) {
    out.cpu_load = load_;
    out.memory_mb = 512.0 + 64.0 * load_;
  } else {
    out.cpu_load = read_cpu_load();
    out.memory_mb = read_memory_mb();
  }
  return out;
}

nlohmann::json to_json(const Telemetry& t) {
  return {{"t", t.timestamp},
          {"cpu_load", t.cpu_load},
          {"memory_mb", t.memory_mb},
          {"temp_c", t.synthetic_temp_c}};
}

std::string to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::rgb: return "rgb";
    case RecordKind::depth: return "depth";
    case RecordKind::detections: return "detections";
    case RecordKind::telemetry: return "telemetry";
    case RecordKind::pose: return "pose";
  }
  return "unknown";
}

SessionLogger::SessionLogger(const fs::path& runs_root, std::string run_id, nlohmann::json metadata)
    : dir_(runs_root / run_id), run_id_(std::move(run_id)), metadata_(std::move(metadata)),
      last_t_(5, -std::numeric_limits<double>::infinity()) {
  std::error_code ec;
  fs::create_directories(dir_ / "rgb", ec);
  if (!ec) fs::create_directories(dir_ / "depth", ec);
  if (ec) throw IoError("cannot create run directory " + dir_.string() + ": " + ec.message());
  events_.open(dir_ / "events.jsonl", std::ios::binary | std::ios::trunc);
  if (!events_) throw IoError("cannot open " + (dir_ / "events.jsonl").string());
  write_index();
}

SessionLogger::~SessionLogger() {
  try {
    if (!finalized_) finalize();
  } catch (...) {
  }
}

std::size_t SessionLogger::record_count() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

void SessionLogger::append(RecordKind kind, double t, nlohmann::json line,
                           std::optional<std::string> ref) {
  // caller holds mutex_
  double& last = last_t_[std::size_t(kind)];
  if (t < last) throw DomainError("session record timestamps must be non-decreasing per kind");
  last = t;
  line["t"] = t;
  line["kind"] = to_string(kind);
  events_ << line.dump() << '\n';
  events_.flush();
  if (!events_) throw IoError("write failed: " + (dir_ / "events.jsonl").string());
  nlohmann::json rec = {{"t", t}, {"kind", to_string(kind)}, {"line", records_.size()}};
  if (ref) rec["ref"] = *ref;
  records_.push_back(std::move(rec));
}

namespace {

std::string numbered(const char* dir, std::size_t n, const char* suffix) {
  char name[64];
  std::snprintf(name, sizeof(name), "%s/%06zu%s", dir, n, suffix);
  return name;
}

}  // namespace

void SessionLogger::log_rgb(double t, const GrayImage& image) {
  std::lock_guard lock(mutex_);
  const std::string ref = numbered("rgb", ++image_seq_, ".png");
  write_png(dir_ / ref, image);
  append(RecordKind::rgb, t, {{"ref", ref}}, ref);
}

void SessionLogger::log_depth(double t, const DepthMap& estimate, const std::optional<DepthMap>& gt,
                              double capture_t) {
  std::lock_guard lock(mutex_);
  const std::size_t n = ++depth_seq_;
  const std::string ref = numbered("depth", n, ".pfm");
  write_depth_pfm(dir_ / ref, estimate);
  nlohmann::json line = {{"ref", ref}, {"capture_t", capture_t}};
  if (gt) {
    const std::string gt_ref = numbered("depth", n, "_gt.pfm");
    write_depth_pfm(dir_ / gt_ref, *gt);
    line["gt_ref"] = gt_ref;
  }
  append(RecordKind::depth, t, std::move(line), ref);
}

void SessionLogger::log_detections(double t, std::uint64_t seq,
                                   const std::vector<Detection>& detections) {
  nlohmann::json items = nlohmann::json::array();
  for (const Detection& d : detections) items.push_back(detection_to_json(d));
  std::lock_guard lock(mutex_);
  append(RecordKind::detections, t, {{"seq", seq}, {"items", items}}, std::nullopt);
}

void SessionLogger::log_telemetry(const Telemetry& telemetry) {
  nlohmann::json line = to_json(telemetry);
  std::lock_guard lock(mutex_);
  append(RecordKind::telemetry, telemetry.timestamp, std::move(line), std::nullopt);
}

void SessionLogger::log_pose(double t, const RoverState& state) {
  nlohmann::json line = {{"x", state.position.x()},
                         {"y", state.position.y()},
                         {"heading", state.heading},
                         {"halted", state.halted}};
  if (state.halt_reason) line["halt_reason"] = *state.halt_reason;
  std::lock_guard lock(mutex_);
  append(RecordKind::pose, t, std::move(line), std::nullopt);
}

void SessionLogger::write_index() const {
  nlohmann::json index = {{"run_id", run_id_},
                          {"metadata", metadata_},
                          {"events", "events.jsonl"},
                          {"record_count", records_.size()},
                          {"records", records_}};
  std::ofstream out(dir_ / "index.json", std::ios::binary | std::ios::trunc);
  out << index.dump(1) << '\n';
  if (!out) throw IoError("cannot write " + (dir_ / "index.json").string());
}

void SessionLogger::finalize(const nlohmann::json& extra) {
  std::lock_guard lock(mutex_);
  metadata_.update(extra);
  events_.flush();
  write_index();
  finalized_ = true;
}

ReplayedRun load_session(const fs::path& run_dir) {
  ReplayedRun run;
  {
    std::ifstream in(run_dir / "index.json");
    if (!in) throw IoError("missing index.json in " + run_dir.string());
    try {
      in >> run.index;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed index.json: " + std::string(e.what()));
    }
  }
  const nlohmann::json& meta = run.index.value("metadata", nlohmann::json::object());
  if (meta.contains("intended"))
    for (const auto& p : meta.at("intended")) run.intended.emplace_back(p[0].get<double>(), p[1].get<double>());
  run.execution.completed = meta.value("completed", false);
  run.execution.elapsed = meta.value("elapsed_s", 0.0);

  std::ifstream events(run_dir / "events.jsonl");
  if (!events) throw IoError("missing events.jsonl in " + run_dir.string());
  std::string line;
  bool was_halted = false;
  while (std::getline(events, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed events.jsonl line: " + std::string(e.what()));
    }
    const std::string kind = j.at("kind").get<std::string>();
    const double t = j.at("t").get<double>();
    if (kind == "pose") {
      TrajectorySample s{t, j.at("x").get<double>(), j.at("y").get<double>(),
                         j.at("heading").get<double>(), j.at("halted").get<bool>()};
      if (s.halted && !was_halted)
        run.execution.halt_events.push_back(
            {t, j.value("halt_reason", std::string()), Eigen::Vector2d(s.x, s.y)});
      was_halted = s.halted;
      run.execution.trajectory.push_back(s);
    } else if (kind == "depth" && j.contains("gt_ref")) {
      run.depth_pairs.emplace_back(read_depth_pfm(run_dir / j.at("ref").get<std::string>()),
                                   read_depth_pfm(run_dir / j.at("gt_ref").get<std::string>()));
    } else if (kind == "detections") {
      ++run.detection_records;
    }
  }
  return run;
}

nlohmann::json evaluate_run(const fs::path& run_dir, std::pair<double, double> band) {
  const ReplayedRun run = load_session(run_dir);
  DepthErrorAccumulator acc(band);
  for (const auto& [est, gt] : run.depth_pairs) acc.add(est, gt);
  nlohmann::json out = {{"run_id", run.index.value("run_id", std::string())},
                        {"depth", to_json(acc.report())}};
  if (!run.execution.trajectory.empty() && !run.intended.empty())
    out["nav"] = to_json(nav_metrics(run.execution, run.intended));
  else
    out["nav"] = nullptr;
  return out;
}

}  // namespace depthrover
