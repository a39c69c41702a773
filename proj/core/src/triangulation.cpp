#include "semtraj/triangulation.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "semtraj/seeding.hpp"

namespace semtraj {
namespace {

constexpr double kBehindPenalty = 1e12;

double reprojection_error(const Camera& cam, const Eigen::Vector3d& point,
                          const Eigen::Vector2d& pixel) {
  const auto proj = cam.project(point);
  if (!proj) return std::numeric_limits<double>::infinity();
  return (*proj - pixel).norm();
}

/// Sum of squared residuals over a subset; behind-camera observations add a
/// large penalty so refinement steps cannot escape through the image plane.
double subset_cost(const Rig& rig, const std::vector<Observation>& obs,
                   const std::vector<int>& subset,
                   const Eigen::Vector3d& point) {
  double cost = 0.0;
  for (int idx : subset) {
    const Camera& cam = rig.cameras[obs[idx].camera_id];
    const auto proj = cam.project(point);
    if (!proj) {
      cost += kBehindPenalty;
      continue;
    }
    cost += (*proj - obs[idx].pixel).squaredNorm();
  }
  return cost;
}

std::vector<int> collect_inliers(const Rig& rig,
                                 const std::vector<Observation>& obs,
                                 const Eigen::Vector3d& point,
                                 double threshold_px) {
  std::vector<int> inliers;
  for (size_t i = 0; i < obs.size(); ++i) {
    const Camera& cam = rig.cameras[obs[i].camera_id];
    if (reprojection_error(cam, point, obs[i].pixel) < threshold_px) {
      inliers.push_back(static_cast<int>(i));
    }
  }
  return inliers;
}

double max_pairwise_angle_deg(const Rig& rig,
                              const std::vector<Observation>& obs,
                              const std::vector<int>& subset,
                              const Eigen::Vector3d& point) {
  std::vector<Eigen::Vector3d> rays;
  rays.reserve(subset.size());
  for (int idx : subset) {
    const Camera& cam = rig.cameras[obs[idx].camera_id];
    const Eigen::Vector3d d = point - cam.center;
    const double n = d.norm();
    if (n > 0.0) rays.push_back(d / n);
  }
  double max_angle = 0.0;
  for (size_t a = 0; a < rays.size(); ++a) {
    for (size_t b = a + 1; b < rays.size(); ++b) {
      const double c = std::clamp(rays[a].dot(rays[b]), -1.0, 1.0);
      max_angle = std::max(max_angle, std::acos(c));
    }
  }
  return max_angle * 180.0 / std::numbers::pi;
}

}  // namespace

std::optional<Eigen::Vector3d> triangulate_dlt(
    const Rig& rig, const std::vector<Observation>& observations) {
  if (observations.size() < 2) return std::nullopt;
  Eigen::MatrixXd A(2 * observations.size(), 4);
  for (size_t i = 0; i < observations.size(); ++i) {
    const Observation& ob = observations[i];
    const Eigen::Matrix<double, 3, 4> P =
        rig.cameras[ob.camera_id].projection_matrix();
    Eigen::Matrix<double, 1, 4> r0 = ob.pixel.x() * P.row(2) - P.row(0);
    Eigen::Matrix<double, 1, 4> r1 = ob.pixel.y() * P.row(2) - P.row(1);
    // Row normalization keeps the SVD balanced when focal lengths are large.
    const double n0 = r0.norm();
    const double n1 = r1.norm();
    A.row(2 * i) = n0 > 0.0 ? (r0 / n0).eval() : r0;
    A.row(2 * i + 1) = n1 > 0.0 ? (r1 / n1).eval() : r1;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-12 * h.head<3>().norm()) return std::nullopt;
  const Eigen::Vector3d point = h.head<3>() / h(3);
  if (!point.allFinite()) return std::nullopt;
  bool any_front = false;
  for (const Observation& ob : observations) {
    if (rig.cameras[ob.camera_id].depth(point) > 0.0) {
      any_front = true;
      break;
    }
  }
  if (!any_front) return std::nullopt;
  return point;
}

Eigen::Vector3d refine_point(const Rig& rig,
                             const std::vector<Observation>& observations,
                             const std::vector<int>& subset,
                             const Eigen::Vector3d& initial) {
  Eigen::Vector3d x = initial;
  double cost = subset_cost(rig, observations, subset, x);
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::Matrix3d JtJ = Eigen::Matrix3d::Zero();
    Eigen::Vector3d Jtr = Eigen::Vector3d::Zero();
    for (int idx : subset) {
      const Observation& ob = observations[idx];
      const Camera& cam = rig.cameras[ob.camera_id];
      const Eigen::Vector3d pc = cam.rotation * (x - cam.center);
      if (pc.z() <= 0.0) continue;
      const double inv_z = 1.0 / pc.z();
      const Eigen::Vector2d proj(
          cam.intrinsics.fx * pc.x() * inv_z + cam.intrinsics.cx,
          cam.intrinsics.fy * pc.y() * inv_z + cam.intrinsics.cy);
      const Eigen::Vector2d r = proj - ob.pixel;
      Eigen::Matrix<double, 2, 3> J_pc;
      J_pc << cam.intrinsics.fx * inv_z, 0.0,
          -cam.intrinsics.fx * pc.x() * inv_z * inv_z, 0.0,
          cam.intrinsics.fy * inv_z,
          -cam.intrinsics.fy * pc.y() * inv_z * inv_z;
      const Eigen::Matrix<double, 2, 3> J = J_pc * cam.rotation;
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * r;
    }
    Eigen::LDLT<Eigen::Matrix3d> solver(JtJ);
    if (solver.info() != Eigen::Success) break;
    Eigen::Vector3d step = -solver.solve(Jtr);
    if (!step.allFinite()) break;
    if (step.norm() < 1e-10) break;
    // Backtrack when the full Gauss-Newton step overshoots.
    bool accepted = false;
    for (int half = 0; half < 8; ++half) {
      const Eigen::Vector3d trial = x + step;
      const double trial_cost = subset_cost(rig, observations, subset, trial);
      if (trial_cost < cost) {
        x = trial;
        cost = trial_cost;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return x;
}

std::optional<Triangulation> triangulate(
    const Rig& rig, const std::vector<Observation>& observations,
    const RansacParams& params, std::uint64_t seed) {
  const size_t n = observations.size();
  if (n < 2) return std::nullopt;

  auto finalize = [&](Eigen::Vector3d point, std::vector<int> inliers)
      -> std::optional<Triangulation> {
    // Refine on the inlier set, then re-collect; iterate while the set
    // grows. Refinement must never lose inliers, so a shrinking pass is
    // rolled back.
    for (int pass = 0; pass < 10; ++pass) {
      const Eigen::Vector3d refined =
          refine_point(rig, observations, inliers, point);
      std::vector<int> new_inliers =
          collect_inliers(rig, observations, refined, params.threshold_px);
      if (new_inliers.size() < inliers.size()) break;
      const bool grew = new_inliers.size() > inliers.size();
      point = refined;
      inliers = std::move(new_inliers);
      if (!grew) break;
    }
    if (inliers.size() < 2) return std::nullopt;
    if (max_pairwise_angle_deg(rig, observations, inliers, point) <
        params.min_angle_deg) {
      return std::nullopt;
    }
    return Triangulation{point, std::move(inliers)};
  };

  // Fast path: if every observation is already consistent with the joint DLT
  // solution there is no need to sample.
  if (auto all = triangulate_dlt(rig, observations)) {
    std::vector<int> inliers =
        collect_inliers(rig, observations, *all, params.threshold_px);
    if (inliers.size() == n) return finalize(*all, std::move(inliers));
  }

  std::vector<int> best_inliers;
  Eigen::Vector3d best_point = Eigen::Vector3d::Zero();
  double best_rms = std::numeric_limits<double>::infinity();

  auto try_pair = [&](size_t i, size_t j) {
    if (observations[i].camera_id == observations[j].camera_id) return;
    const std::vector<Observation> pair{observations[i], observations[j]};
    const auto cand = triangulate_dlt(rig, pair);
    if (!cand) return;
    std::vector<int> inliers =
        collect_inliers(rig, observations, *cand, params.threshold_px);
    if (inliers.size() < 2) return;
    double ss = 0.0;
    for (int idx : inliers) {
      const double e = reprojection_error(
          rig.cameras[observations[idx].camera_id], *cand,
          observations[idx].pixel);
      ss += e * e;
    }
    const double rms = std::sqrt(ss / static_cast<double>(inliers.size()));
    if (inliers.size() > best_inliers.size() ||
        (inliers.size() == best_inliers.size() && rms < best_rms)) {
      best_inliers = std::move(inliers);
      best_point = *cand;
      best_rms = rms;
    }
  };

  const size_t total_pairs = n * (n - 1) / 2;
  if (total_pairs <= static_cast<size_t>(params.max_iterations)) {
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = i + 1; j < n; ++j) try_pair(i, j);
    }
  } else {
    SplitMix64 rng(seed);
    int needed = params.max_iterations;
    for (int it = 0; it < needed; ++it) {
      const size_t i = rng.below(n);
      size_t j = rng.below(n - 1);
      if (j >= i) ++j;
      try_pair(i, j);
      if (!best_inliers.empty()) {
        const double w =
            static_cast<double>(best_inliers.size()) / static_cast<double>(n);
        const double denom = std::log(std::max(1e-12, 1.0 - w * w));
        if (denom < 0.0) {
          const int k = static_cast<int>(
              std::ceil(std::log(1.0 - params.confidence) / denom));
          needed = std::min(needed, std::max(it + 1, k));
        }
      }
    }
  }

  if (best_inliers.size() < 2) return std::nullopt;
  return finalize(best_point, std::move(best_inliers));
}

}  // namespace semtraj
