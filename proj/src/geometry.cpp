#include "depthrover/geometry.hpp"

namespace depthrover {

CameraIntrinsics CameraIntrinsics::from_fov(int width_px, int height_px,
                                            double fov_h_deg, double fov_v_deg) {
  CameraIntrinsics k;
  k.width_px = width_px;
  k.height_px = height_px;
  k.fov_h_deg = fov_h_deg;
  k.fov_v_deg = fov_v_deg;
  k.focal_px = focal_from_fov(fov_h_deg, width_px);
  k.cx_px = width_px / 2.0;
  k.cy_px = height_px / 2.0;
  k.validate();
  return k;
}

void CameraIntrinsics::validate() const {
  if (width_px < 2 || height_px < 2)
    throw DomainError("image dimensions must be at least 2x2");
  if (!(fov_h_deg > 0 && fov_h_deg < 180 && fov_v_deg > 0 && fov_v_deg < 180))
    throw DomainError("field of view must lie in (0, 180) degrees");
  if (std::abs(focal_px - focal_from_fov(fov_h_deg, width_px)) > 0.5)
    throw DomainError("focal length inconsistent with horizontal field of view");
  if (std::abs(focal_px - focal_from_fov(fov_v_deg, height_px)) > 0.5)
    throw DomainError("non-square pixels are not supported");
}

StereoRig StereoRig::paper_mode(double units_per_meter) {
  StereoRig rig;
  rig.intrinsics = CameraIntrinsics::from_fov(500, 500, 60.0, 60.0);
  rig.baseline = 24.0;
  rig.units_per_meter = units_per_meter;
  return rig;
}

void StereoRig::validate() const {
  intrinsics.validate();
  if (!(baseline > 0)) throw DomainError("baseline must be positive");
  if (!(units_per_meter > 0)) throw DomainError("units_per_meter must be positive");
}

Ray pixel_ray(const CameraIntrinsics& intrinsics, double u, double v) {
  if (!(u >= 0 && u < intrinsics.width_px && v >= 0 && v < intrinsics.height_px))
    throw DomainError("pixel outside image");
  Ray ray;
  ray.direction = Eigen::Vector3d(u - intrinsics.cx_px, v - intrinsics.cy_px,
                                  intrinsics.focal_px)
                      .normalized();
  return ray;
}

Eigen::Matrix3d RigPose::camera_to_world() const {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const Eigen::Vector3d forward(cp * cy, cp * sy, sp);
  const Eigen::Vector3d right(sy, -cy, 0.0);
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return r;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

}  // namespace depthrover
