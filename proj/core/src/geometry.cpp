#include "semtraj/geometry.hpp"

#include <Eigen/LU>

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace semtraj {

void Camera::validate() const {
  const Eigen::Matrix3d rtr = rotation * rotation.transpose();
  if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("camera " + std::to_string(id) +
                                ": rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("camera " + std::to_string(id) +
                                ": rotation determinant is not +1");
  }
  if (intrinsics.fx <= 0.0 || intrinsics.fy <= 0.0) {
    throw std::invalid_argument("camera " + std::to_string(id) +
                                ": focal length must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera " + std::to_string(id) +
                                ": image size must be positive");
  }
  if (intrinsics.cx < 0.0 || intrinsics.cx >= width || intrinsics.cy < 0.0 ||
      intrinsics.cy >= height) {
    throw std::invalid_argument("camera " + std::to_string(id) +
                                ": principal point outside image bounds");
  }
}

Eigen::Matrix<double, 3, 4> Camera::projection_matrix() const {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  K(0, 0) = intrinsics.fx;
  K(1, 1) = intrinsics.fy;
  K(0, 2) = intrinsics.cx;
  K(1, 2) = intrinsics.cy;
  Eigen::Matrix<double, 3, 4> Rt;
  Rt.leftCols<3>() = rotation;
  Rt.col(3) = -rotation * center;
  return K * Rt;
}

double Camera::depth(const Eigen::Vector3d& point) const {
  // Third row of R (X - C): distance along the optical axis.
  return rotation.row(2).dot(point - center);
}

std::optional<Eigen::Vector2d> Camera::project(
    const Eigen::Vector3d& point) const {
  const Eigen::Vector3d pc = rotation * (point - center);
  if (pc.z() <= 0.0) return std::nullopt;
  return Eigen::Vector2d(intrinsics.fx * pc.x() / pc.z() + intrinsics.cx,
                         intrinsics.fy * pc.y() / pc.z() + intrinsics.cy);
}

bool Camera::in_bounds(const Eigen::Vector2d& pixel) const {
  return pixel.x() >= 0.0 && pixel.x() < width && pixel.y() >= 0.0 &&
         pixel.y() < height;
}

Eigen::Vector3d Camera::pixel_ray(const Eigen::Vector2d& pixel) const {
  const Eigen::Vector3d dir_cam((pixel.x() - intrinsics.cx) / intrinsics.fx,
                                (pixel.y() - intrinsics.cy) / intrinsics.fy,
                                1.0);
  return (rotation.transpose() * dir_cam).normalized();
}

void Rig::validate() const {
  if (cameras.size() < 2) {
    throw std::invalid_argument("rig needs at least 2 cameras");
  }
  if (frame_rate <= 0.0) {
    throw std::invalid_argument("rig frame_rate must be positive");
  }
  for (size_t i = 0; i < cameras.size(); ++i) {
    if (cameras[i].id != static_cast<int>(i)) {
      throw std::invalid_argument(
          "camera ids must be contiguous from 0; slot " + std::to_string(i) +
          " holds id " + std::to_string(cameras[i].id));
    }
    cameras[i].validate();
  }
}

double visibility(const Camera& camera, const Eigen::Vector3d& point,
                  const Eigen::Vector2d& observed_pixel, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("visibility: sigma must be positive");
  }
  const auto proj = camera.project(point);
  if (!proj || !camera.in_bounds(*proj)) return 0.0;
  const double r = (*proj - observed_pixel).norm();
  const double q = r / sigma;
  return std::exp(-q * q);
}

}  // namespace semtraj
