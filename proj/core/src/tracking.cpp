#include "semtraj/tracking.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "semtraj/seeding.hpp"

namespace semtraj {
namespace {

Observation to_observation(const ObservationRecord& r) {
  return {static_cast<int>(r.camera), Eigen::Vector2d(r.x, r.y),
          static_cast<int>(r.frame)};
}

/// Sparse (camera, V) pairs for the cameras observing this group, given the
/// triangulated point. Cameras without an observation carry zero visibility
/// and are omitted.
std::vector<std::pair<std::uint16_t, float>> visibility_pairs(
    std::span<const ObservationRecord> group, const Rig& rig,
    const Eigen::Vector3d& point, double sigma) {
  std::vector<std::pair<std::uint16_t, float>> vis;
  vis.reserve(group.size());
  for (const ObservationRecord& r : group) {
    const double v = visibility(rig.cameras[r.camera], point,
                                Eigen::Vector2d(r.x, r.y), sigma);
    if (v > 0.0) vis.emplace_back(r.camera, static_cast<float>(v));
  }
  return vis;
}

int count_above(const std::vector<std::pair<std::uint16_t, float>>& vis,
                double eps) {
  int n = 0;
  for (const auto& [cam, v] : vis) {
    if (v > eps) ++n;
  }
  return n;
}

}  // namespace

void TrackerParams::validate() const {
  if (sigma <= 0.0) throw std::invalid_argument("tracker sigma must be positive");
  if (eps_s <= 0.0 || eps_s >= 1.0) {
    throw std::invalid_argument("tracker eps_s must be in (0,1)");
  }
  if (max_reproj <= 0.0) {
    throw std::invalid_argument("tracker max_reproj must be positive");
  }
  if (min_views < 2) {
    throw std::invalid_argument("tracker min_views must be >= 2");
  }
}

ObservationIndex::ObservationIndex(
    const std::vector<ObservationRecord>& records, int frames)
    : records_(&records), frames_(frames) {
  frame_start_.assign(frames_ + 1, 0);
  for (const ObservationRecord& r : records) {
    if (static_cast<int>(r.frame) >= frames_) {
      throw std::invalid_argument("observation frame beyond declared range");
    }
    ++frame_start_[r.frame + 1];
  }
  for (int t = 0; t < frames_; ++t) frame_start_[t + 1] += frame_start_[t];
  for (size_t i = 1; i < records.size(); ++i) {
    const ObservationRecord& a = records[i - 1];
    const ObservationRecord& b = records[i];
    const bool ordered =
        a.frame < b.frame ||
        (a.frame == b.frame &&
         (a.trajectory_id < b.trajectory_id ||
          (a.trajectory_id == b.trajectory_id && a.camera < b.camera)));
    if (!ordered) {
      throw std::invalid_argument(
          "observations must be sorted by (frame, trajectory_id, camera)");
    }
  }
}

std::span<const ObservationRecord> ObservationIndex::frame(int t) const {
  if (t < 0 || t >= frames_) return {};
  return {records_->data() + frame_start_[t],
          frame_start_[t + 1] - frame_start_[t]};
}

std::span<const ObservationRecord> ObservationIndex::group(
    int t, std::uint32_t corr_id) const {
  const auto slice = frame(t);
  const auto lo = std::lower_bound(
      slice.begin(), slice.end(), corr_id,
      [](const ObservationRecord& r, std::uint32_t id) {
        return r.trajectory_id < id;
      });
  auto hi = lo;
  while (hi != slice.end() && hi->trajectory_id == corr_id) ++hi;
  return {lo, hi};
}

std::vector<std::uint32_t> ObservationIndex::corr_ids_at(int t) const {
  std::vector<std::uint32_t> ids;
  std::uint32_t last = 0;
  bool first = true;
  for (const ObservationRecord& r : frame(t)) {
    if (first || r.trajectory_id != last) {
      ids.push_back(r.trajectory_id);
      last = r.trajectory_id;
      first = false;
    }
  }
  return ids;
}

std::vector<Seed> seed_points(std::span<const ObservationRecord> frame_obs,
                              const Rig& rig, const TrackerParams& params,
                              SeedStats* stats) {
  params.validate();
  std::vector<Seed> seeds;
  SeedStats local;
  size_t i = 0;
  while (i < frame_obs.size()) {
    size_t j = i;
    while (j < frame_obs.size() &&
           frame_obs[j].trajectory_id == frame_obs[i].trajectory_id) {
      ++j;
    }
    const std::span<const ObservationRecord> group =
        frame_obs.subspan(i, j - i);
    i = j;

    if (static_cast<int>(group.size()) < params.min_views) {
      ++local.under_viewed;
      continue;
    }
    std::vector<Observation> obs;
    obs.reserve(group.size());
    for (const ObservationRecord& r : group) obs.push_back(to_observation(r));
    const std::uint64_t seed = derive_seed(
        params.seed, "seed",
        (static_cast<std::uint64_t>(group[0].frame) << 32) |
            group[0].trajectory_id);
    const auto tri = triangulate(rig, obs, params.ransac, seed);
    if (!tri) {
      ++local.degenerate;
      continue;
    }
    Seed s;
    s.corr_id = group[0].trajectory_id;
    s.point = tri->point;
    s.visibility = visibility_pairs(group, rig, tri->point, params.sigma);
    if (count_above(s.visibility, params.eps_s) < 2) {
      ++local.degenerate;
      continue;
    }
    seeds.push_back(std::move(s));
  }
  if (stats) {
    stats->degenerate += local.degenerate;
    stats->under_viewed += local.under_viewed;
  }
  return seeds;
}

TrackOutcome track_step(Trajectory& traj,
                        std::span<const ObservationRecord> next_frame_group,
                        const Rig& rig, const TrackerParams& params) {
  const int t = traj.dissolve;
  const auto& last_vis = traj.visibility.back();

  // Observations from cameras the track still trusts.
  std::vector<Observation> usable;
  usable.reserve(next_frame_group.size());
  for (const ObservationRecord& r : next_frame_group) {
    bool trusted = false;
    for (const auto& [cam, v] : last_vis) {
      if (cam == r.camera) {
        trusted = v > params.eps_s;
        break;
      }
      if (cam > r.camera) break;
    }
    if (trusted) usable.push_back(to_observation(r));
  }
  if (static_cast<int>(usable.size()) < params.min_views) {
    return TrackOutcome::Dissolved;
  }

  const std::uint64_t seed =
      derive_seed(params.seed, "track",
                  (static_cast<std::uint64_t>(t + 1) << 32) | traj.id);
  const auto tri = triangulate(rig, usable, params.ransac, seed);
  if (!tri) return TrackOutcome::Dissolved;

  // Average over everything the step consumed, not just the RANSAC inliers.
  // Inliers all sit below the threshold by construction, so an inlier-only
  // average could never trip this rule; a consistent bias across the trusted
  // cameras has to count even when RANSAC latched onto a subset.
  double total = 0.0;
  for (const Observation& ob : usable) {
    const auto proj = rig.cameras[ob.camera_id].project(tri->point);
    total += proj ? (*proj - ob.pixel).norm() : params.max_reproj * 1e3;
  }
  const double avg = total / static_cast<double>(usable.size());
  if (avg > params.max_reproj) return TrackOutcome::Dissolved;

  // Every camera observing the id at t+1 gets a fresh visibility score, so
  // previously distrusted cameras can come back once they agree again.
  auto vis = visibility_pairs(next_frame_group, rig, tri->point, params.sigma);
  if (count_above(vis, params.eps_s) < 2) return TrackOutcome::Dissolved;

  traj.points.push_back(tri->point);
  traj.visibility.push_back(std::move(vis));
  traj.dissolve = t + 1;
  return TrackOutcome::Extended;
}

StreamResult build_stream(const std::vector<ObservationRecord>& observations,
                          int frames, const Rig& rig,
                          const TrackerParams& params) {
  params.validate();
  StreamResult result;
  if (observations.empty() || frames < 2) return result;
  const ObservationIndex index(observations, frames);

  struct Open {
    Trajectory traj;
    std::uint32_t corr_id;
  };
  std::vector<Open> live;
  std::uint32_t next_id = 0;

  auto seed_frame = [&](int t, const std::unordered_set<std::uint32_t>& covered) {
    std::vector<Seed> seeds;
    if (covered.empty()) {
      seeds = seed_points(index.frame(t), rig, params, &result.seed_stats);
    } else {
      // Seed only ids without a live trajectory.
      for (std::uint32_t id : index.corr_ids_at(t)) {
        if (covered.count(id)) continue;
        auto grp = index.group(t, id);
        auto s = seed_points(grp, rig, params, &result.seed_stats);
        for (auto& sd : s) seeds.push_back(std::move(sd));
      }
    }
    for (Seed& s : seeds) {
      Open o;
      o.traj.id = next_id++;
      o.traj.emerge = t;
      o.traj.dissolve = t;
      o.traj.points.push_back(s.point);
      o.traj.visibility.push_back(std::move(s.visibility));
      o.corr_id = s.corr_id;
      live.push_back(std::move(o));
    }
  };

  auto retire = [&](Open&& o) {
    if (o.traj.length() >= 2) {
      result.trajectories.push_back(std::move(o.traj));
      result.origin_corr.push_back(o.corr_id);
    }
  };

  seed_frame(0, {});
  for (int t = 0; t + 1 < frames; ++t) {
    std::vector<Open> survivors;
    survivors.reserve(live.size());
    for (Open& o : live) {
      const auto group = index.group(t + 1, o.corr_id);
      if (track_step(o.traj, group, rig, params) == TrackOutcome::Extended) {
        survivors.push_back(std::move(o));
      } else {
        retire(std::move(o));
      }
    }
    live = std::move(survivors);

    // Ids observed at t+1 with no live track may start a fresh fragment,
    // except at the final frame where it could never reach 2 frames.
    if (t + 2 < frames) {
      std::unordered_set<std::uint32_t> covered;
      covered.reserve(live.size());
      for (const Open& o : live) covered.insert(o.corr_id);
      seed_frame(t + 1, covered);
    }
  }
  for (Open& o : live) retire(std::move(o));

  // Stable output order: by emergence, then id.
  std::vector<size_t> order(result.trajectories.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const Trajectory& ta = result.trajectories[a];
    const Trajectory& tb = result.trajectories[b];
    if (ta.emerge != tb.emerge) return ta.emerge < tb.emerge;
    return ta.id < tb.id;
  });
  StreamResult sorted;
  sorted.seed_stats = result.seed_stats;
  sorted.trajectories.reserve(order.size());
  sorted.origin_corr.reserve(order.size());
  for (size_t idx : order) {
    sorted.trajectories.push_back(std::move(result.trajectories[idx]));
    sorted.origin_corr.push_back(result.origin_corr[idx]);
  }
  // Re-number so ids match the output order.
  for (size_t i = 0; i < sorted.trajectories.size(); ++i) {
    sorted.trajectories[i].id = static_cast<std::uint32_t>(i);
  }
  return sorted;
}

}  // namespace semtraj
