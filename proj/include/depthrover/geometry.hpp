#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace depthrover {

/// Raised when an argument is outside the domain of a geometric operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Disparity at or below zero: the pixel has no valid correspondence.
class NonPositiveDisparity : public DomainError {
 public:
  explicit NonPositiveDisparity(double d)
      : DomainError("non-positive disparity: " + std::to_string(d)) {}
};

template <typename Scalar>
Scalar deg2rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

/// Pinhole focal length (pixels) for a horizontal field of view spanning
/// `width_px` pixels.
template <typename Scalar>
Scalar focal_from_fov(Scalar fov_deg, int width_px) {
  if (!(fov_deg > Scalar(0) && fov_deg < Scalar(180)))
    throw DomainError("field of view must lie in (0, 180) degrees");
  if (width_px < 2) throw DomainError("image width must be at least 2 px");
  return (Scalar(width_px) / Scalar(2)) / std::tan(deg2rad(fov_deg) / Scalar(2));
}

struct CameraIntrinsics {
  int width_px = 0;
  int height_px = 0;
  double fov_h_deg = 0;
  double fov_v_deg = 0;
  double focal_px = 0;
  double cx_px = 0;
  double cy_px = 0;

  /// Square pixels: the vertical field of view must agree with the
  /// horizontal focal length to within half a pixel.
  static CameraIntrinsics from_fov(int width_px, int height_px, double fov_h_deg,
                                   double fov_v_deg);

  /// Throws DomainError if the stored fields violate the type invariants.
  void validate() const;
};

/// Rectified stereo pair: both cameras share `intrinsics`; the right camera
/// sits `baseline` scene units along the left camera's +X axis.
struct StereoRig {
  CameraIntrinsics intrinsics;
  double baseline = 0;
  double units_per_meter = 1.0;

  /// 500x500, 60x60 deg, 24-unit baseline.
  static StereoRig paper_mode(double units_per_meter = 1.0);

  double focal_baseline() const { return intrinsics.focal_px * baseline; }
  void validate() const;
};

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
};

template <typename Scalar>
Scalar depth_from_disparity(Scalar focal_baseline, Scalar disparity) {
  if (!(disparity > Scalar(0))) throw NonPositiveDisparity(double(disparity));
  return focal_baseline / disparity;
}

template <typename Scalar>
Scalar disparity_from_depth(Scalar focal_baseline, Scalar depth) {
  if (!(depth > Scalar(0))) throw DomainError("depth must be positive");
  return focal_baseline / depth;
}

inline double depth_from_disparity(const StereoRig& rig, double disparity) {
  return depth_from_disparity(rig.focal_baseline(), disparity);
}

inline double disparity_from_depth(const StereoRig& rig, double depth) {
  return disparity_from_depth(rig.focal_baseline(), depth);
}

/// Ray through continuous image coordinate (u, v) in the camera frame
/// (x right, y down, z forward). The principal point maps to +Z.
Ray pixel_ray(const CameraIntrinsics& intrinsics, double u, double v);

/// Pose of the left camera in the world frame (z up). Yaw is measured
/// counter-clockwise from +X, pitch is positive looking up.
struct RigPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0;
  double pitch = 0;

  /// Columns are the camera x (right), y (down), z (forward) axes in world.
  Eigen::Matrix3d camera_to_world() const;
};

/// Wrap an angle into (-pi, pi].
double wrap_angle(double radians);

}  // namespace depthrover
