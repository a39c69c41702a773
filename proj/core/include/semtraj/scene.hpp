#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace semtraj {

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// A rigid point cloud with a class label and a materialized per-frame pose
/// track. Body-frame points are fixed; world position at frame t is
/// motion[t].rotation * p + motion[t].translation.
struct RigidBody {
  int label = 1;  // class index, 1-based
  std::vector<Eigen::Vector3d> points;
  std::vector<Pose> motion;

  /// Throws std::invalid_argument unless label >= 1, there are >= 4
  /// non-coplanar points, and every pose rotation is orthonormal with
  /// det +1 (1e-9 tolerance).
  void validate(int expected_frames) const;
};

struct RigLayout {
  double radius = 1.5;
  std::vector<double> row_heights = {0.5, 2.0};
  std::vector<int> cameras_per_row = {35, 34};
  double frame_rate = 30.0;
  double focal_px = 900.0;
  int width = 1280;
  int height = 1024;
  /// Angular span the cameras cover. 360 is the full enclosing ring;
  /// smaller values leave part of the cylinder unobserved, which is how
  /// occlusion-heavy scenes starve a track of views.
  double arc_degrees = 360.0;
};

struct NoiseSpec {
  double sigma_obs = 0.5;          // observation pixel noise, px
  double confusion_rate = 0.0;     // probability a detection reports a wrong label
  double false_detection_rate = 0.0;  // mean spurious detections per camera-frame
  double bleed_radius_px = 2.0;    // label bleed around each detection
  /// Disables every stochastic part of the confidence simulator: constant
  /// detection confidence, zero background, no confusion, no false
  /// detections. Requires confusion_rate == 0 and false_detection_rate == 0.
  bool deterministic_confidence = false;
};

struct SceneSpec {
  std::vector<RigidBody> bodies;
  int frames = 2;
  RigLayout rig_layout;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  /// Number of semantic classes N. 0 means "largest body label".
  int num_classes = 0;
  /// A point is occluded in a view when another body's point projects
  /// within this radius at smaller depth.
  double occlusion_radius_px = 1.0;

  void validate() const;
  int label_count() const;
  int camera_count() const;
};

/// Body-frame point cloud generators.
std::vector<Eigen::Vector3d> ball_points(double radius, int count,
                                         std::uint64_t seed);
std::vector<Eigen::Vector3d> box_points(const Eigen::Vector3d& half_extents,
                                        int count, std::uint64_t seed);
/// Regular lattice of dims.x * dims.y * dims.z points spanning
/// [-half_extents, +half_extents]. A dimension of 1 collapses to 0.
std::vector<Eigen::Vector3d> grid_points(const Eigen::Vector3d& half_extents,
                                         const Eigen::Vector3i& dims);

/// Pose track generators. dt is the frame interval in seconds.
std::vector<Pose> static_motion(int frames, const Eigen::Vector3d& position);
std::vector<Pose> linear_motion(int frames, const Eigen::Vector3d& start,
                                const Eigen::Vector3d& velocity, double dt);
/// Carousel motion: the body circles `center` at `radius` while rotating
/// about the vertical axis, like an object on a turntable arm.
std::vector<Pose> orbit_motion(int frames, const Eigen::Vector3d& center,
                               double radius, double angular_speed,
                               double phase, double dt);
/// In-place rotation about an axis through `position`.
std::vector<Pose> spin_motion(int frames, const Eigen::Vector3d& position,
                              const Eigen::Vector3d& axis,
                              double angular_speed, double dt);

/// Scene documents use the JSON schema in docs/file-formats.md: bodies carry
/// either generator blocks ("shape" + "motion") or explicit points + poses.
SceneSpec scene_from_json(const std::string& text);
std::string scene_to_json(const SceneSpec& spec);
SceneSpec load_scene(const std::filesystem::path& path);
void save_scene(const SceneSpec& spec, const std::filesystem::path& path);

}  // namespace semtraj
