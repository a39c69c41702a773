#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "semtraj/geometry.hpp"
#include "semtraj/synthesis.hpp"
#include "semtraj/trajectory.hpp"
#include "semtraj/triangulation.hpp"

namespace semtraj {

struct TrackerParams {
  double sigma = 2.0;       // visibility kernel width, px
  double eps_s = 0.3;       // visibility threshold for usable cameras
  double max_reproj = 2.0;  // dissolve when avg inlier reprojection exceeds this
  int min_views = 2;
  RansacParams ransac;
  std::uint64_t seed = 0;  // master seed for RANSAC sampling streams

  void validate() const;
};

/// Frame-major index over observations sorted by (frame, trajectory_id,
/// camera), the order render_observations emits. Groups are the contiguous
/// runs of one correspondence id within one frame.
class ObservationIndex {
 public:
  ObservationIndex(const std::vector<ObservationRecord>& records, int frames);

  int frames() const { return frames_; }
  std::span<const ObservationRecord> frame(int t) const;
  /// All observations of one correspondence id at one frame (possibly empty).
  std::span<const ObservationRecord> group(int t, std::uint32_t corr_id) const;
  /// Correspondence ids present at a frame, ascending.
  std::vector<std::uint32_t> corr_ids_at(int t) const;

 private:
  const std::vector<ObservationRecord>* records_;
  int frames_;
  std::vector<size_t> frame_start_;  // frames_ + 1 offsets
};

struct Seed {
  std::uint32_t corr_id = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  /// Sparse (camera, V) pairs, ascending by camera, zeros omitted.
  std::vector<std::pair<std::uint16_t, float>> visibility;
};

struct SeedStats {
  std::uint64_t degenerate = 0;    // groups where RANSAC found no model
  std::uint64_t under_viewed = 0;  // groups with fewer than min_views cameras
};

/// Triangulates every correspondence group of one frame. Groups that are
/// degenerate or end with fewer than 2 cameras above eps_s are skipped and
/// counted.
std::vector<Seed> seed_points(std::span<const ObservationRecord> frame_obs,
                              const Rig& rig, const TrackerParams& params,
                              SeedStats* stats = nullptr);

enum class TrackOutcome { Extended, Dissolved };

/// Advances a live trajectory to the next frame. Only cameras whose stored
/// visibility at the last frame exceeds eps_s contribute observations to the
/// triangulation; visibility is then recomputed for every camera observing
/// the id at the new frame. Dissolves (leaving the trajectory unchanged)
/// when usable views < min_views, triangulation is degenerate, average
/// inlier reprojection exceeds max_reproj, or fewer than 2 cameras stay
/// above eps_s after the update.
TrackOutcome track_step(Trajectory& traj,
                        std::span<const ObservationRecord> next_frame_group,
                        const Rig& rig, const TrackerParams& params);

struct StreamResult {
  std::vector<Trajectory> trajectories;
  /// Correspondence id each trajectory was seeded from, parallel to
  /// trajectories.
  std::vector<std::uint32_t> origin_corr;
  SeedStats seed_stats;
};

/// Full tracking loop: seeds at frame 0, advances live tracks frame by
/// frame, re-seeds ids that lost their track, and returns every trajectory
/// with lifespan >= 2 frames.
StreamResult build_stream(const std::vector<ObservationRecord>& observations,
                          int frames, const Rig& rig,
                          const TrackerParams& params);

}  // namespace semtraj
