#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "semtraj/trajectory.hpp"

namespace semtraj {

/// Frame-to-frame SE(3) motion of a trajectory's neighborhood.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
  /// Throws unless rotation is orthonormal with det +1 (1e-9).
  void validate() const;
};

struct TransformRansacParams {
  double inlier_tol = 0.01;  // meters of prediction error
  double confidence = 0.999;
  int max_iterations = 100;

  void validate() const;
};

struct AffinityParams {
  double tau = 0.02;    // affinity falloff scale (m)
  double eps = 0.05;    // neighbor radius for transform estimation (m)
  double eps_a = 0.30;  // neighbor radius for affinity evaluation (m)
  double dropout = 0.5;
  int overlap_min = 2;      // shared frames needed to relate two tracks
  int neighbor_cap = 64;    // nearest eps-neighbors kept per trajectory
  TransformRansacParams ransac;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Indices of every trajectory j != i sharing >= overlap_min frames with i
/// and staying within `radius` of it over the whole shared lifetime.
std::vector<std::uint32_t> neighbors(const std::vector<Trajectory>& trajectories,
                                     std::uint32_t i, double radius,
                                     int overlap_min);

struct LocalTransformResult {
  RigidTransform transform;
  /// Trajectory indices whose displacement the transform predicts within
  /// the RANSAC tolerance.
  std::vector<std::uint32_t> inliers;
};

/// Estimates the rigid motion of trajectory i's eps-neighborhood from frame
/// t-1 to t. Minimal RANSAC samples of three neighbors give a rotation via
/// the displacement-matrix relation projected to SO(3); the translation
/// anchors i exactly (t = X_t - R X_{t-1}, so i's own prediction error is
/// zero); the winner is refined on its inliers. Empty optional when fewer
/// than three neighbors are alive at both frames or every sample is
/// degenerate.
std::optional<LocalTransformResult> local_transform(
    const std::vector<Trajectory>& trajectories, std::uint32_t i, int t,
    double eps, const TransformRansacParams& ransac, std::uint64_t seed);

/// Worst prediction residual of trajectory j under i's per-step transforms,
/// maxed over the consecutive frame pairs of the shared lifetime.
/// transforms_of_i[s] covers the step (emerge_i + s) -> (emerge_i + s + 1).
/// Steps with no transform are skipped; +infinity when none applied.
double reconstruction_error(
    const std::vector<Trajectory>& trajectories, std::uint32_t i,
    std::uint32_t j,
    std::span<const std::optional<RigidTransform>> transforms_of_i);

struct AffinityEdge {
  std::uint32_t i = 0;  // always < j
  std::uint32_t j = 0;
  float weight = 0.0f;  // in [0,1]
};

struct AffinityGraph {
  std::vector<AffinityEdge> edges;  // sorted by (i, j)
  AffinityParams params;

  /// 0 when the pair has no edge. Order of the arguments is irrelevant.
  double weight(std::uint32_t a, std::uint32_t b) const;
};

/// Relates every eps_a-neighbor pair: each direction scores
/// exp(-(e/tau)^2), the edge takes the larger one, and seeded per-edge
/// dropout thins the graph. Pairs whose errors are both +infinity (or whose
/// weight underflows to zero) produce no edge.
AffinityGraph build_affinity(const std::vector<Trajectory>& trajectories,
                             const AffinityParams& params);

/// Binary dump: u32 header length, JSON header (format_version, params,
/// edge count), then (i u32, j u32, weight f32) triplets, little endian.
void save_affinity(const std::filesystem::path& path,
                   const AffinityGraph& graph);
AffinityGraph load_affinity(const std::filesystem::path& path);

/// Plain-text export for small graphs: one "i,j,weight" row per edge.
void save_affinity_csv(const std::filesystem::path& path,
                       const AffinityGraph& graph);

}  // namespace semtraj
