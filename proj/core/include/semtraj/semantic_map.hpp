#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "semtraj/synthesis.hpp"
#include "semtraj/trajectory.hpp"

namespace semtraj {

struct PoolParams {
  /// Minimum visibility for a camera to be eligible as the pooled view.
  double eps_v = 0.3;
  /// Pooling aborts (NoView) with fewer eligible cameras than this.
  int min_candidates = 1;

  void validate() const;
};

/// One camera's class-confidence vector at a projected point, with the
/// visibility the tracker assigned to that camera.
struct ViewConfidence {
  int camera_id = -1;
  Eigen::VectorXd confidence;
  double visibility = 0.0;
};

struct PooledView {
  Eigen::VectorXd values;
  int camera_id = -1;
};

/// Picks the view most consistent with the others: among cameras whose
/// visibility clears eps_v, the one minimizing sum_j V_j * |L_c - L_j|^2
/// over every input entry. Ties go to the lowest camera id. The result is
/// always one of the input vectors, never a blend. Empty optional means no
/// camera was eligible.
std::optional<PooledView> view_pool(const std::vector<ViewConfidence>& views,
                                    const PoolParams& params);

/// Baseline pooling: plain mean over every gathered view, visibility
/// ignored. Cameras whose pixel shows an occluder or clutter contribute
/// that junk at full weight, which is the failure mode view_pool's gate
/// and median selection exist to avoid. camera_id is -1 since the result
/// is a blend. Empty optional when the view list is empty.
std::optional<PooledView> average_pool(const std::vector<ViewConfidence>& views);

enum class PoolMethod { ViewPool, AveragePool };

/// Confidence vectors for a trajectory at one frame: every rig camera
/// (optionally restricted to camera_filter) whose projection of the point
/// lands inside its image, with the recognizer's output at that pixel and
/// the trajectory's stored visibility, zero for cameras that never
/// observed the point. The frame must lie inside the trajectory's
/// lifespan.
std::vector<ViewConfidence> gather_views(
    const Trajectory& traj, int frame, const ConfidenceSim& sim,
    const Rig& rig, const std::vector<std::uint16_t>& camera_filter = {});

/// Per-trajectory label distribution, averaged over the frames where
/// pooling produced a view.
struct SemanticMap {
  Eigen::VectorXd values;
  int pooled_frames = 0;
  /// True when every frame of the lifespan came back NoView; values is the
  /// zero vector in that case.
  bool no_view = false;
};

/// Builds the map for one trajectory: per frame, queries each stored-
/// visibility camera's confidence field at the point's projection, pools,
/// and averages the pooled vectors over the frames that produced one.
/// camera_filter restricts pooling to those camera ids (empty = all); the
/// evaluation harness uses it for camera-subset ablations, and switches
/// method to AveragePool for its baseline comparisons.
SemanticMap build_semantic_map(const Trajectory& traj,
                               const ConfidenceSim& sim, const Rig& rig,
                               const PoolParams& params,
                               const std::vector<std::uint16_t>& camera_filter = {},
                               PoolMethod method = PoolMethod::ViewPool);

/// 1-based index of the largest entry; ties go to the lowest index.
int argmax_label(const SemanticMap& map);

/// One row per trajectory: trajectory_id, N confidence columns, argmax
/// label. Column count comes from the first map.
void save_semantic_maps_csv(const std::filesystem::path& path,
                            const std::vector<std::uint32_t>& trajectory_ids,
                            const std::vector<SemanticMap>& maps);

}  // namespace semtraj
