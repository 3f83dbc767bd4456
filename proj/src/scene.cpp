#include "depthrover/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace depthrover {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t h, std::int64_t v) {
  return splitmix64(h ^ (std::uint64_t(v) + 0x632BE59BD9B4E019ull + (h << 6) + (h >> 2)));
}

double unit_hash(std::uint64_t h) { return double(h >> 11) * 0x1.0p-53; }

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double lerp(double a, double b, double t) { return a + (b - a) * t; }

double value_noise_2d(std::uint64_t key, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = std::int64_t(fx), iy = std::int64_t(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const auto corner = [key](std::int64_t i, std::int64_t j) {
    return 2.0 * unit_hash(hash_combine(hash_combine(key, i), j)) - 1.0;
  };
  return lerp(lerp(corner(ix, iy), corner(ix + 1, iy), tx),
              lerp(corner(ix, iy + 1), corner(ix + 1, iy + 1), tx), ty);
}

double value_noise_3d(std::uint64_t key, const Eigen::Vector3d& p) {
  const Eigen::Vector3d f = p.array().floor();
  const auto ix = std::int64_t(f.x()), iy = std::int64_t(f.y()), iz = std::int64_t(f.z());
  const double tx = smooth(p.x() - f.x()), ty = smooth(p.y() - f.y()),
               tz = smooth(p.z() - f.z());
  const auto corner = [key](std::int64_t i, std::int64_t j, std::int64_t k) {
    return unit_hash(hash_combine(hash_combine(hash_combine(key, i), j), k));
  };
  const double c00 = lerp(corner(ix, iy, iz), corner(ix + 1, iy, iz), tx);
  const double c10 = lerp(corner(ix, iy + 1, iz), corner(ix + 1, iy + 1, iz), tx);
  const double c01 = lerp(corner(ix, iy, iz + 1), corner(ix + 1, iy, iz + 1), tx);
  const double c11 = lerp(corner(ix, iy + 1, iz + 1), corner(ix + 1, iy + 1, iz + 1), tx);
  return lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
}

double texture_at(const SceneDescription& scene, const Eigen::Vector3d& p) {
  constexpr std::uint64_t kTextureKey = 0x7E47u;
  const double s = scene.texture_scale;
  return 0.5 * value_noise_3d(kTextureKey, p / s) +
         0.3 * value_noise_3d(kTextureKey + 1, p / (2.0 * s)) +
         0.2 * value_noise_3d(kTextureKey + 2, p / (4.0 * s));
}

struct GridIndex {
  int i = 0, j = 0;
  double a = 0, b = 0;
};

GridIndex locate(const Terrain& t, double x, double y) {
  const int nx = int(t.heightmap.cols()), ny = int(t.heightmap.rows());
  const double fx = std::clamp((x + t.extent.x() / 2) / t.cell_size, 0.0, double(nx - 1));
  const double fy = std::clamp((y + t.extent.y() / 2) / t.cell_size, 0.0, double(ny - 1));
  GridIndex g;
  g.i = std::min(int(fx), nx - 2);
  g.j = std::min(int(fy), ny - 2);
  g.a = fx - g.i;
  g.b = fy - g.j;
  return g;
}

std::optional<double> intersect_ellipsoid(const Boulder& b, const Eigen::Vector3d& origin,
                                          const Eigen::Vector3d& direction) {
  const Eigen::Vector3d o = (origin - b.center).cwiseQuotient(b.radii);
  const Eigen::Vector3d d = direction.cwiseQuotient(b.radii);
  const double qa = d.squaredNorm();
  const double qb = 2.0 * o.dot(d);
  const double qc = o.squaredNorm() - 1.0;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = (-qb - sq) / (2.0 * qa);
  if (t0 > 1e-12) return t0;
  return std::nullopt;
}

// Slab test against the terrain's bounding box.
bool terrain_bounds(const Terrain& t, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                    double& t_enter, double& t_exit) {
  const Eigen::Vector3d lo(-t.extent.x() / 2, -t.extent.y() / 2, t.min_height - 1e-9);
  const Eigen::Vector3d hi(-t.extent.x() / 2 + (t.heightmap.cols() - 1) * t.cell_size,
                           -t.extent.y() / 2 + (t.heightmap.rows() - 1) * t.cell_size,
                           t.max_height + 1e-9);
  t_enter = 0.0;
  t_exit = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < lo[k] || o[k] > hi[k]) return false;
      continue;
    }
    double a = (lo[k] - o[k]) / d[k];
    double b = (hi[k] - o[k]) / d[k];
    if (a > b) std::swap(a, b);
    t_enter = std::max(t_enter, a);
    t_exit = std::min(t_exit, b);
  }
  return t_enter <= t_exit;
}

std::optional<double> intersect_terrain(const Terrain& terrain, const Eigen::Vector3d& o,
                                        const Eigen::Vector3d& d) {
  double t_enter = 0, t_exit = 0;
  if (!terrain_bounds(terrain, o, d, t_enter, t_exit)) return std::nullopt;
  const auto clearance = [&](double t) {
    const Eigen::Vector3d p = o + t * d;
    return p.z() - terrain.height_at(p.x(), p.y());
  };
  const double step = terrain.cell_size / 2.0;
  double prev_t = t_enter;
  double prev_f = clearance(prev_t);
  if (prev_f <= 0) return t_enter;
  while (prev_t < t_exit) {
    const double t = std::min(prev_t + step, t_exit);
    const double f = clearance(t);
    if (f <= 0) {
      double lo = prev_t, hi = t, f_lo = prev_f, f_hi = f;
      for (int it = 0; it < 8; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = clearance(mid);
        if (fm <= 0) {
          hi = mid;
          f_hi = fm;
        } else {
          lo = mid;
          f_lo = fm;
        }
      }
      // Secant step: exact on planar patches.
      const double denom = f_lo - f_hi;
      return denom > 0 ? lo + f_lo * (hi - lo) / denom : hi;
    }
    prev_t = t;
    prev_f = f;
  }
  return std::nullopt;
}

void check_camera_clear(const SceneDescription& scene, const Eigen::Vector3d& p) {
  const Terrain& t = scene.terrain;
  if (t.contains(p.x(), p.y()) && p.z() <= t.height_at(p.x(), p.y()))
    throw DomainError("camera below terrain surface");
  for (const Boulder& b : scene.boulders)
    if ((p - b.center).cwiseQuotient(b.radii).squaredNorm() <= 1.0)
      throw DomainError("camera inside a boulder");
}

std::uint8_t to_byte(double intensity) {
  return std::uint8_t(std::lround(std::clamp(intensity, 0.0, 1.0) * 255.0));
}

Eigen::Vector3d vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw DomainError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

bool Terrain::contains(double x, double y) const {
  const double x0 = -extent.x() / 2, y0 = -extent.y() / 2;
  return x >= x0 && y >= y0 && x <= x0 + (heightmap.cols() - 1) * cell_size &&
         y <= y0 + (heightmap.rows() - 1) * cell_size;
}

double Terrain::height_at(double x, double y) const {
  const GridIndex g = locate(*this, x, y);
  const double h00 = heightmap(g.j, g.i), h10 = heightmap(g.j, g.i + 1);
  const double h01 = heightmap(g.j + 1, g.i), h11 = heightmap(g.j + 1, g.i + 1);
  return lerp(lerp(h00, h10, g.a), lerp(h01, h11, g.a), g.b);
}

Eigen::Vector3d Terrain::normal_at(double x, double y) const {
  const GridIndex g = locate(*this, x, y);
  const double h00 = heightmap(g.j, g.i), h10 = heightmap(g.j, g.i + 1);
  const double h01 = heightmap(g.j + 1, g.i), h11 = heightmap(g.j + 1, g.i + 1);
  const double dhdx = ((h10 - h00) * (1 - g.b) + (h11 - h01) * g.b) / cell_size;
  const double dhdy = ((h01 - h00) * (1 - g.a) + (h11 - h10) * g.a) / cell_size;
  return Eigen::Vector3d(-dhdx, -dhdy, 1.0).normalized();
}

bool Boulder::footprint_contains(double x, double y) const {
  const double dx = (x - center.x()) / radii.x(), dy = (y - center.y()) / radii.y();
  return dx * dx + dy * dy <= 1.0;
}

void SceneDescription::validate() const {
  if (terrain.heightmap.rows() < 2 || terrain.heightmap.cols() < 2)
    throw DomainError("terrain grid must be at least 2x2");
  if (!terrain.heightmap.allFinite()) throw DomainError("terrain has non-finite elevations");
  if (std::abs(sun_direction.norm() - 1.0) > 1e-9)
    throw DomainError("sun_direction must be a unit vector");
  if (!(albedo > 0 && albedo <= 1)) throw DomainError("albedo must lie in (0, 1]");
  if (!(texture_amplitude >= 0 && texture_amplitude <= 1))
    throw DomainError("texture_amplitude must lie in [0, 1]");
  if (!(texture_scale > 0)) throw DomainError("texture_scale must be positive");
  for (const Boulder& b : boulders)
    if (!(b.radii.array() > 0).all()) throw DomainError("boulder radii must be positive");
}

Terrain generate_terrain(std::uint64_t seed, const Eigen::Vector2d& extent,
                         double cell_size, double roughness) {
  if (!(extent.x() > 0 && extent.y() > 0 && cell_size > 0))
    throw DomainError("terrain extent and cell size must be positive");
  if (!(roughness >= 0) || !std::isfinite(roughness))
    throw DomainError("roughness must be finite and non-negative");
  const int nx = std::max(2, int(std::ceil(extent.x() / cell_size)) + 1);
  const int ny = std::max(2, int(std::ceil(extent.y() / cell_size)) + 1);

  Terrain t;
  t.cell_size = cell_size;
  t.seed = seed;
  t.extent = extent;
  t.roughness = roughness;
  t.heightmap = Raster<double>::Zero(ny, nx);

  constexpr int kOctaves = 5;
  const double base_wavelength = std::min(extent.x(), extent.y()) / 4.0;
  double norm = 0.0;
  for (int o = 0; o < kOctaves; ++o) norm += std::pow(0.5, o);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = -extent.x() / 2 + i * cell_size;
      const double y = -extent.y() / 2 + j * cell_size;
      double h = 0.0;
      for (int o = 0; o < kOctaves; ++o) {
        const double wavelength = base_wavelength / std::pow(2.0, o);
        h += std::pow(0.5, o) *
             value_noise_2d(hash_combine(splitmix64(seed), o), x / wavelength, y / wavelength);
      }
      t.heightmap(j, i) = roughness == 0.0 ? 0.0 : roughness * h / norm;
    }
  }
  t.min_height = t.heightmap.minCoeff();
  t.max_height = t.heightmap.maxCoeff();
  return t;
}

std::vector<Boulder> place_boulders(const Terrain& terrain, std::uint64_t seed, int count,
                                    const Eigen::Vector2d& radius_range,
                                    const BoulderRegion& region) {
  if (count < 0) throw DomainError("boulder count must be non-negative");
  if (!(radius_range.x() > 0 && radius_range.y() >= radius_range.x()))
    throw DomainError("radius range must be positive and ordered");
  std::vector<Boulder> out;
  if (count == 0) return out;

  const double x0 = std::max(region.min.x(), -terrain.extent.x() / 2);
  const double x1 = std::min(region.max.x(), terrain.extent.x() / 2);
  const double y0 = std::max(region.min.y(), -terrain.extent.y() / 2);
  const double y1 = std::min(region.max.y(), terrain.extent.y() / 2);
  if (!(x0 < x1 && y0 < y1)) throw DomainError("boulder region outside terrain");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  std::uniform_real_distribution<double> ur(radius_range.x(), radius_range.y());
  std::uniform_real_distribution<double> uz(0.6, 1.0);

  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; int(out.size()) < count; ++attempt) {
    Boulder b;
    b.radii = Eigen::Vector3d(ur(rng), ur(rng), 0.0);
    b.radii.z() = uz(rng) * std::min(b.radii.x(), b.radii.y());
    b.center.x() = ux(rng);
    b.center.y() = uy(rng);
    bool clear = true;
    if (region.min_gap > 0 && attempt < kMaxAttempts) {
      for (const Boulder& other : out) {
        const double reach = b.radii.head<2>().maxCoeff() +
                             other.radii.head<2>().maxCoeff() + region.min_gap;
        if ((b.center.head<2>() - other.center.head<2>()).norm() < reach) clear = false;
      }
    }
    if (!clear) continue;
    b.center.z() = terrain.height_at(b.center.x(), b.center.y()) + b.radii.z();
    b.id = int(out.size());
    out.push_back(b);
  }
  return out;
}

std::optional<Hit> raycast(const SceneDescription& scene, const Eigen::Vector3d& origin,
                           const Eigen::Vector3d& direction) {
  std::optional<Hit> best;
  if (auto t = intersect_terrain(scene.terrain, origin, direction)) {
    Hit h;
    h.t = *t;
    h.point = origin + *t * direction;
    h.normal = scene.terrain.normal_at(h.point.x(), h.point.y());
    h.label = kTerrainId;
    best = h;
  }
  for (std::size_t k = 0; k < scene.boulders.size(); ++k) {
    const Boulder& b = scene.boulders[k];
    const auto t = intersect_ellipsoid(b, origin, direction);
    if (!t || (best && *t >= best->t)) continue;
    Hit h;
    h.t = *t;
    h.point = origin + *t * direction;
    h.normal = (h.point - b.center).cwiseQuotient(b.radii.cwiseProduct(b.radii)).normalized();
    h.label = boulder_label(k);
    best = h;
  }
  return best;
}

double shade(const SceneDescription& scene, const Hit& hit) {
  const double lambert = std::max(0.0, hit.normal.dot(scene.sun_direction));
  const double light = scene.ambient + (1.0 - scene.ambient) * lambert;
  const double tex = 1.0 - scene.texture_amplitude + scene.texture_amplitude * texture_at(scene, hit.point);
  return scene.albedo * light * tex;
}

StereoFrame render_stereo(const SceneDescription& scene, const StereoRig& rig,
                          const RigPose& pose, double timestamp,
                          const RenderOptions& options) {
  rig.validate();
  scene.validate();
  if (options.supersample < 1) throw DomainError("supersample must be at least 1");
  const CameraIntrinsics& k = rig.intrinsics;
  const Eigen::Matrix3d r = pose.camera_to_world();
  const Eigen::Vector3d left_origin = pose.position;
  const Eigen::Vector3d right_origin = pose.position + rig.baseline * r.col(0);
  check_camera_clear(scene, left_origin);
  if (options.render_right) check_camera_clear(scene, right_origin);

  StereoFrame frame;
  frame.timestamp = timestamp;
  frame.rig_pose = pose;
  frame.left = GrayImage::Zero(k.height_px, k.width_px);
  frame.right = options.render_right ? GrayImage::Zero(k.height_px, k.width_px) : GrayImage();
  frame.gt_depth_left = Raster<double>::Constant(k.height_px, k.width_px,
                                                 std::numeric_limits<double>::infinity());
  frame.gt_label_left = Raster<int>::Constant(k.height_px, k.width_px, kSkyId);

  const int ss = options.supersample;
  const auto camera_dir = [&](double u, double v) {
    return Eigen::Vector3d(u - k.cx_px, v - k.cy_px, k.focal_px).normalized();
  };
  const auto sample = [&](const Eigen::Vector3d& origin, double u, double v) {
    const auto hit = raycast(scene, origin, r * camera_dir(u, v));
    return hit ? shade(scene, *hit) : 0.0;
  };

  for (int y = 0; y < k.height_px; ++y) {
    for (int x = 0; x < k.width_px; ++x) {
      const Eigen::Vector3d dc = camera_dir(x + 0.5, y + 0.5);
      if (const auto hit = raycast(scene, left_origin, r * dc)) {
        frame.gt_depth_left(y, x) = hit->t * dc.z();
        frame.gt_label_left(y, x) = hit->label;
      }
      double sum_left = 0.0, sum_right = 0.0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double u = x + (sx + 0.5) / ss, v = y + (sy + 0.5) / ss;
          sum_left += sample(left_origin, u, v);
          if (options.render_right) sum_right += sample(right_origin, u, v);
        }
      }
      frame.left(y, x) = to_byte(sum_left / (ss * ss));
      if (options.render_right) frame.right(y, x) = to_byte(sum_right / (ss * ss));
    }
  }
  return frame;
}

StereoFrame render_depth(const SceneDescription& scene, const CameraIntrinsics& intrinsics,
                         const RigPose& pose, double timestamp) {
  intrinsics.validate();
  check_camera_clear(scene, pose.position);
  const Eigen::Matrix3d r = pose.camera_to_world();
  StereoFrame frame;
  frame.timestamp = timestamp;
  frame.rig_pose = pose;
  frame.gt_depth_left = Raster<double>::Constant(intrinsics.height_px, intrinsics.width_px,
                                                 std::numeric_limits<double>::infinity());
  frame.gt_label_left = Raster<int>::Constant(intrinsics.height_px, intrinsics.width_px, kSkyId);
  for (int y = 0; y < intrinsics.height_px; ++y) {
    for (int x = 0; x < intrinsics.width_px; ++x) {
      const Eigen::Vector3d dc = pixel_ray(intrinsics, x + 0.5, y + 0.5).direction;
      if (const auto hit = raycast(scene, pose.position, r * dc)) {
        frame.gt_depth_left(y, x) = hit->t * dc.z();
        frame.gt_label_left(y, x) = hit->label;
      }
    }
  }
  return frame;
}

nlohmann::json scene_to_json(const SceneDescription& scene) {
  nlohmann::json boulders = nlohmann::json::array();
  for (const Boulder& b : scene.boulders)
    boulders.push_back({{"center", {b.center.x(), b.center.y(), b.center.z()}},
                        {"radii", {b.radii.x(), b.radii.y(), b.radii.z()}}});
  const Terrain& t = scene.terrain;
  return {{"seed", t.seed},
          {"extent", {t.extent.x(), t.extent.y()}},
          {"cell_size", t.cell_size},
          {"roughness", t.roughness},
          {"boulders", boulders},
          {"sun_direction",
           {scene.sun_direction.x(), scene.sun_direction.y(), scene.sun_direction.z()}},
          {"albedo", scene.albedo},
          {"texture_amplitude", scene.texture_amplitude},
          {"texture_scale", scene.texture_scale},
          {"ambient", scene.ambient}};
}

SceneDescription scene_from_json(const nlohmann::json& j) {
  SceneDescription scene;
  const auto& extent = j.at("extent");
  if (!extent.is_array() || extent.size() != 2) throw DomainError("extent must be [width, length]");
  scene.terrain = generate_terrain(j.at("seed").get<std::uint64_t>(),
                                   {extent[0].get<double>(), extent[1].get<double>()},
                                   j.at("cell_size").get<double>(),
                                   j.value("roughness", 0.0));
  if (j.contains("boulders")) {
    for (const auto& jb : j.at("boulders")) {
      Boulder b;
      b.center = vec3(jb.at("center"));
      b.radii = vec3(jb.at("radii"));
      b.id = int(scene.boulders.size());
      scene.boulders.push_back(b);
    }
  }
  if (j.contains("sun_direction")) {
    const Eigen::Vector3d sun = vec3(j.at("sun_direction"));
    if (!(sun.norm() > 0)) throw DomainError("sun_direction must be non-zero");
    scene.sun_direction = sun.normalized();
  }
  scene.albedo = j.value("albedo", scene.albedo);
  scene.texture_amplitude = j.value("texture_amplitude", scene.texture_amplitude);
  scene.texture_scale = j.value("texture_scale", scene.texture_scale);
  scene.ambient = j.value("ambient", scene.ambient);
  scene.validate();
  return scene;
}

}  // namespace depthrover
