#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "semtraj/geometry.hpp"

namespace semtraj {

struct RansacParams {
  double threshold_px = 2.0;
  double min_angle_deg = 1.0;
  double confidence = 0.999;
  int max_iterations = 500;
};

struct Triangulation {
  Eigen::Vector3d point;
  std::vector<int> inliers;  // indices into the observation list, ascending
};

/// Linear two-or-more-view triangulation (DLT on the stacked cross-product
/// rows, row-normalized). Returns nullopt when the design matrix is rank
/// deficient or the solution has non-positive depth in every view.
std::optional<Eigen::Vector3d> triangulate_dlt(
    const Rig& rig, const std::vector<Observation>& observations);

/// Gauss-Newton refinement of reprojection error over the given observation
/// subset. Stops after max 20 iterations or when the step norm drops below
/// 1e-10 m. Backtracks (halving) when a step increases the cost; gives up
/// the step after 8 halvings.
Eigen::Vector3d refine_point(const Rig& rig,
                             const std::vector<Observation>& observations,
                             const std::vector<int>& subset,
                             const Eigen::Vector3d& initial);

/// RANSAC triangulation: samples observation pairs, triangulates, scores by
/// the inlier count at params.threshold_px, then refines on the best inlier
/// set. Re-collects inliers after refinement and iterates refinement while
/// the inlier set grows; if a refinement pass shrinks the set the previous
/// point is kept. Returns nullopt (degenerate) when no model reaches 2
/// inliers or the best model's maximum pairwise ray angle is below
/// params.min_angle_deg.
std::optional<Triangulation> triangulate(
    const Rig& rig, const std::vector<Observation>& observations,
    const RansacParams& params, std::uint64_t seed = 0);

}  // namespace semtraj
