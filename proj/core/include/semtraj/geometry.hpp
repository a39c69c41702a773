#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace semtraj {

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// One pinhole view. Extrinsics follow the world-to-camera convention
/// x_cam = R (X - C), so the projection matrix is K R [I | -C].
struct Camera {
  int id = -1;
  Intrinsics intrinsics;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument if the rotation is not orthonormal with
  /// det +1 (1e-9 tolerance), focal lengths are not positive, or the
  /// principal point lies outside the image.
  void validate() const;

  Eigen::Matrix<double, 3, 4> projection_matrix() const;

  /// Depth of the point along the optical axis (the homogeneous scale the
  /// projection divides by). Positive means in front of the camera.
  double depth(const Eigen::Vector3d& point) const;

  /// Pixel position of a world point, or nullopt when depth <= 0 (behind
  /// the camera plane).
  std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& point) const;

  /// True when the pixel lies inside [0, width) x [0, height).
  bool in_bounds(const Eigen::Vector2d& pixel) const;

  /// Unit direction in world coordinates of the ray through a pixel.
  Eigen::Vector3d pixel_ray(const Eigen::Vector2d& pixel) const;
};

struct Rig {
  std::vector<Camera> cameras;
  double frame_rate = 30.0;

  /// Throws std::invalid_argument unless camera ids are contiguous from 0,
  /// there are at least 2 cameras, and each camera validates.
  void validate() const;
};

struct Observation {
  int camera_id = -1;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  int frame = -1;
};

/// Visibility score V = exp(-(r/sigma)^2) where r is the reprojection
/// residual norm against the observed pixel. Zero when the point is behind
/// the camera or projects outside the image bounds. sigma must be > 0.
double visibility(const Camera& camera, const Eigen::Vector3d& point,
                  const Eigen::Vector2d& observed_pixel, double sigma);

}  // namespace semtraj
