#include "semtraj/semantic_map.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace semtraj {

void PoolParams::validate() const {
  if (eps_v <= 0.0 || eps_v >= 1.0) {
    throw std::invalid_argument("pool eps_v must be in (0,1)");
  }
  if (min_candidates < 1) {
    throw std::invalid_argument("pool min_candidates must be >= 1");
  }
}

std::optional<PooledView> view_pool(const std::vector<ViewConfidence>& views,
                                    const PoolParams& params) {
  params.validate();
  int eligible = 0;
  for (const ViewConfidence& v : views) {
    if (v.visibility > params.eps_v) ++eligible;
  }
  if (eligible < params.min_candidates) return std::nullopt;

  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < views.size(); ++c) {
    if (views[c].visibility <= params.eps_v) continue;
    double cost = 0.0;
    for (const ViewConfidence& other : views) {
      cost += other.visibility *
              (views[c].confidence - other.confidence).squaredNorm();
    }
    const bool wins =
        cost < best_cost ||
        (cost == best_cost && views[c].camera_id < views[best].camera_id);
    if (wins) {
      best = static_cast<int>(c);
      best_cost = cost;
    }
  }
  return PooledView{views[best].confidence, views[best].camera_id};
}

std::optional<PooledView> average_pool(const std::vector<ViewConfidence>& views) {
  if (views.empty()) return std::nullopt;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(views.front().confidence.size());
  for (const ViewConfidence& v : views) acc += v.confidence;
  return PooledView{acc / static_cast<double>(views.size()), -1};
}

std::vector<ViewConfidence> gather_views(
    const Trajectory& traj, int frame, const ConfidenceSim& sim,
    const Rig& rig, const std::vector<std::uint16_t>& camera_filter) {
  if (!traj.alive_at(frame)) {
    throw std::invalid_argument("frame outside the trajectory's lifespan");
  }
  const Eigen::Vector3d& point = traj.points[frame - traj.emerge];
  std::vector<ViewConfidence> views;
  for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
    const auto cam = static_cast<std::uint16_t>(c);
    if (!camera_filter.empty() &&
        std::find(camera_filter.begin(), camera_filter.end(), cam) ==
            camera_filter.end()) {
      continue;
    }
    const auto proj = rig.cameras[c].project(point);
    if (!proj || !rig.cameras[c].in_bounds(*proj)) continue;
    ViewConfidence vc;
    vc.camera_id = cam;
    vc.confidence = sim.field(cam, frame).query(*proj).cast<double>();
    // Zero for cameras that never observed the point; such views still
    // enter the list so the unweighted average sees whatever occludes the
    // line of sight, while view_pool's eps_v gate drops them.
    vc.visibility = traj.visibility_of(frame, cam);
    views.push_back(std::move(vc));
  }
  return views;
}

SemanticMap build_semantic_map(const Trajectory& traj,
                               const ConfidenceSim& sim, const Rig& rig,
                               const PoolParams& params,
                               const std::vector<std::uint16_t>& camera_filter,
                               PoolMethod method) {
  params.validate();
  if (traj.points.empty()) {
    throw std::invalid_argument("trajectory has no frames");
  }
  const int N = sim.num_classes();
  SemanticMap map;
  map.values = Eigen::VectorXd::Zero(N);

  for (int t = traj.emerge; t <= traj.dissolve; ++t) {
    const auto views = gather_views(traj, t, sim, rig, camera_filter);
    const auto pooled = method == PoolMethod::ViewPool
                            ? view_pool(views, params)
                            : average_pool(views);
    if (!pooled) continue;
    map.values += pooled->values;
    ++map.pooled_frames;
  }

  if (map.pooled_frames == 0) {
    map.no_view = true;
    return map;
  }
  map.values /= static_cast<double>(map.pooled_frames);
  return map;
}

int argmax_label(const SemanticMap& map) {
  if (map.values.size() == 0) {
    throw std::invalid_argument("semantic map is empty");
  }
  int best = 0;
  map.values.maxCoeff(&best);
  // maxCoeff already returns the first maximum; keep the contract explicit.
  return best + 1;
}

void save_semantic_maps_csv(const std::filesystem::path& path,
                            const std::vector<std::uint32_t>& trajectory_ids,
                            const std::vector<SemanticMap>& maps) {
  if (trajectory_ids.size() != maps.size()) {
    throw std::invalid_argument("trajectory id / map count mismatch");
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  const int N = maps.empty() ? 0 : static_cast<int>(maps[0].values.size());
  out << "trajectory_id";
  for (int k = 1; k <= N; ++k) out << ",class_" << k;
  out << ",label\n";
  for (size_t i = 0; i < maps.size(); ++i) {
    out << trajectory_ids[i];
    char buf[32];
    for (int k = 0; k < N; ++k) {
      std::snprintf(buf, sizeof(buf), "%.9g", maps[i].values[k]);
      out << ',' << buf;
    }
    out << ',' << argmax_label(maps[i]) << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

}  // namespace semtraj
