#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace semtraj {

/// One fragmented 3D track. points[k] is the position at frame emerge + k;
/// visibility[k] holds sparse (camera, probability) pairs for that frame,
/// ascending by camera id. Probabilities below 1e-3 are dropped at save
/// time, so zero-visibility cameras are simply absent.
struct Trajectory {
  std::uint32_t id = 0;
  int emerge = 0;    // T_e
  int dissolve = 0;  // T_d
  std::vector<Eigen::Vector3d> points;
  std::vector<std::vector<std::pair<std::uint16_t, float>>> visibility;

  int length() const { return dissolve - emerge + 1; }
  bool alive_at(int frame) const { return frame >= emerge && frame <= dissolve; }
  const Eigen::Vector3d& point_at(int frame) const {
    return points[frame - emerge];
  }
  /// Visibility of one camera at a frame; 0 when absent.
  double visibility_of(int frame, int camera) const;
};

/// Binary trajectory stream ("STRJ" magic, format_version, trajectory count;
/// per trajectory: id u32, T_e u32, T_d u32, then per frame 3 f32 point
/// coordinates, then per frame a u16 pair count followed by
/// (camera u16, prob f32) pairs).
void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::filesystem::path& path);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);

/// Readable JSON export for small scenes and debugging.
void export_trajectories_json(const std::vector<Trajectory>& trajectories,
                              const std::filesystem::path& path);

}  // namespace semtraj
