#include "semtraj/affinity.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "semtraj/parallel.hpp"
#include "semtraj/seeding.hpp"

namespace semtraj {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Shared lifetime [first, last], empty when first > last.
std::pair<int, int> overlap(const Trajectory& a, const Trajectory& b) {
  return {std::max(a.emerge, b.emerge), std::min(a.dissolve, b.dissolve)};
}

/// Largest separation over the shared lifetime; +inf without overlap.
double max_distance(const Trajectory& a, const Trajectory& b) {
  const auto [first, last] = overlap(a, b);
  if (first > last) return kInf;
  double worst = 0.0;
  for (int t = first; t <= last; ++t) {
    worst = std::max(worst, (a.point_at(t) - b.point_at(t)).norm());
  }
  return worst;
}

Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

/// Anchor-relative displacements of one candidate at both step frames.
struct Displacement {
  std::uint32_t index;  // trajectory index
  Eigen::Vector3d prev;
  Eigen::Vector3d next;
};

/// Rotation best mapping prev displacements onto next ones, centered so the
/// anchor's own noise cancels; nullopt when the cross-covariance collapses.
std::optional<Eigen::Matrix3d> fit_rotation(
    const std::vector<Displacement>& disp, const std::vector<int>& subset) {
  Eigen::Vector3d mean_prev = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_next = Eigen::Vector3d::Zero();
  for (int k : subset) {
    mean_prev += disp[k].prev;
    mean_next += disp[k].next;
  }
  mean_prev /= static_cast<double>(subset.size());
  mean_next /= static_cast<double>(subset.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  double scale = 0.0;
  for (int k : subset) {
    const Eigen::Vector3d p = disp[k].prev - mean_prev;
    const Eigen::Vector3d n = disp[k].next - mean_next;
    h += n * p.transpose();
    scale = std::max(scale, p.squaredNorm());
  }
  if (h.norm() < 1e-12 * std::max(1.0, scale)) return std::nullopt;
  return project_to_so3(h);
}

int count_inliers(const std::vector<Displacement>& disp,
                  const Eigen::Matrix3d& r, double tol,
                  std::vector<int>* out) {
  if (out) out->clear();
  int n = 0;
  for (size_t k = 0; k < disp.size(); ++k) {
    if ((disp[k].next - r * disp[k].prev).norm() < tol) {
      ++n;
      if (out) out->push_back(static_cast<int>(k));
    }
  }
  return n;
}

std::optional<LocalTransformResult> estimate_step(
    const std::vector<Trajectory>& trajectories, std::uint32_t i, int t,
    const std::vector<std::uint32_t>& candidates,
    const TransformRansacParams& ransac, std::uint64_t seed) {
  const Trajectory& anchor = trajectories[i];
  std::vector<Displacement> disp;
  disp.reserve(candidates.size());
  for (std::uint32_t j : candidates) {
    const Trajectory& traj = trajectories[j];
    if (!traj.alive_at(t - 1) || !traj.alive_at(t)) continue;
    disp.push_back({j, traj.point_at(t - 1) - anchor.point_at(t - 1),
                    traj.point_at(t) - anchor.point_at(t)});
  }
  const int n = static_cast<int>(disp.size());
  if (n < 3) return std::nullopt;

  // The displacement-matrix relation needs an invertible prev matrix; the
  // guard is relative to the neighborhood scale.
  const auto sample_rotation =
      [&](int a, int b, int c) -> std::optional<Eigen::Matrix3d> {
    Eigen::Matrix3d prev, next;
    prev.col(0) = disp[a].prev;
    prev.col(1) = disp[b].prev;
    prev.col(2) = disp[c].prev;
    next.col(0) = disp[a].next;
    next.col(1) = disp[b].next;
    next.col(2) = disp[c].next;
    double scale = 0.0;
    for (int k = 0; k < 3; ++k) scale = std::max(scale, prev.col(k).norm());
    if (std::abs(prev.determinant()) < 1e-12 * scale * scale * scale) {
      return std::nullopt;
    }
    return project_to_so3(next * prev.inverse());
  };

  Eigen::Matrix3d best_r;
  int best_count = 0;
  std::vector<int> inliers;

  const auto consider = [&](int a, int b, int c) {
    const auto r = sample_rotation(a, b, c);
    if (!r) return;
    const int count = count_inliers(disp, *r, ransac.inlier_tol, nullptr);
    if (count > best_count) {
      best_count = count;
      best_r = *r;
    }
  };

  const std::int64_t total =
      static_cast<std::int64_t>(n) * (n - 1) * (n - 2) / 6;
  if (total <= ransac.max_iterations) {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        for (int c = b + 1; c < n; ++c) consider(a, b, c);
      }
    }
  } else {
    SplitMix64 rng(seed);
    int needed = ransac.max_iterations;
    for (int iter = 0; iter < needed; ++iter) {
      int a = static_cast<int>(rng.next() % n);
      int b = static_cast<int>(rng.next() % n);
      int c = static_cast<int>(rng.next() % n);
      if (a == b || b == c || a == c) continue;
      consider(a, b, c);
      if (best_count > 2) {
        const double w = static_cast<double>(best_count) / n;
        const double denom = std::log1p(-w * w * w);
        if (denom < 0.0) {
          const int adaptive = static_cast<int>(
              std::ceil(std::log(1.0 - ransac.confidence) / denom));
          needed = std::min(needed, std::max(iter + 1, adaptive));
        }
      }
    }
  }
  if (best_count < 3) return std::nullopt;

  count_inliers(disp, best_r, ransac.inlier_tol, &inliers);
  const auto refined = fit_rotation(disp, inliers);
  if (refined) {
    // Keep the refinement only while it does not lose support.
    std::vector<int> refined_in;
    const int count =
        count_inliers(disp, *refined, ransac.inlier_tol, &refined_in);
    if (count >= best_count) {
      best_r = *refined;
      inliers = std::move(refined_in);
    }
  }

  LocalTransformResult result;
  result.transform.rotation = best_r;
  result.transform.translation =
      anchor.point_at(t) - best_r * anchor.point_at(t - 1);
  result.inliers.reserve(inliers.size());
  for (int k : inliers) result.inliers.push_back(disp[k].index);
  std::sort(result.inliers.begin(), result.inliers.end());
  return result;
}

/// 21-bit packed 3D cell key; coordinates in meters stay far inside range.
std::int64_t pack_cell(std::int64_t x, std::int64_t y, std::int64_t z) {
  return ((x + (1 << 20)) << 42) | ((y + (1 << 20)) << 21) | (z + (1 << 20));
}

Eigen::Vector3<std::int64_t> cell_of(const Eigen::Vector3d& p, double cell) {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell)),
          static_cast<std::int64_t>(std::floor(p.y() / cell)),
          static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

}  // namespace

void RigidTransform::validate() const {
  const Eigen::Matrix3d err =
      rotation * rotation.transpose() - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("rotation determinant is not +1");
  }
}

void TransformRansacParams::validate() const {
  if (inlier_tol <= 0.0) {
    throw std::invalid_argument("transform inlier_tol must be positive");
  }
  if (confidence <= 0.0 || confidence >= 1.0) {
    throw std::invalid_argument("transform confidence must be in (0,1)");
  }
  if (max_iterations < 1) {
    throw std::invalid_argument("transform max_iterations must be >= 1");
  }
}

void AffinityParams::validate() const {
  if (tau <= 0.0) throw std::invalid_argument("affinity tau must be positive");
  if (eps <= 0.0 || eps_a <= 0.0) {
    throw std::invalid_argument("affinity radii must be positive");
  }
  if (eps > eps_a) {
    throw std::invalid_argument("affinity eps must not exceed eps_a");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("affinity dropout must be in [0,1)");
  }
  if (overlap_min < 2) {
    throw std::invalid_argument("affinity overlap_min must be >= 2");
  }
  if (neighbor_cap < 3) {
    throw std::invalid_argument("affinity neighbor_cap must be >= 3");
  }
  ransac.validate();
}

std::vector<std::uint32_t> neighbors(const std::vector<Trajectory>& trajectories,
                                     std::uint32_t i, double radius,
                                     int overlap_min) {
  if (radius <= 0.0) throw std::invalid_argument("neighbor radius must be positive");
  const Trajectory& anchor = trajectories[i];
  std::vector<std::uint32_t> out;
  for (std::uint32_t j = 0; j < trajectories.size(); ++j) {
    if (j == i) continue;
    const auto [first, last] = overlap(anchor, trajectories[j]);
    if (last - first + 1 < overlap_min) continue;
    if (max_distance(anchor, trajectories[j]) < radius) out.push_back(j);
  }
  return out;
}

std::optional<LocalTransformResult> local_transform(
    const std::vector<Trajectory>& trajectories, std::uint32_t i, int t,
    double eps, const TransformRansacParams& ransac, std::uint64_t seed) {
  ransac.validate();
  if (!trajectories[i].alive_at(t - 1) || !trajectories[i].alive_at(t)) {
    throw std::invalid_argument("trajectory not alive across the step");
  }
  const auto candidates = neighbors(trajectories, i, eps, 2);
  return estimate_step(trajectories, i, t, candidates, ransac, seed);
}

double reconstruction_error(
    const std::vector<Trajectory>& trajectories, std::uint32_t i,
    std::uint32_t j,
    std::span<const std::optional<RigidTransform>> transforms_of_i) {
  const Trajectory& a = trajectories[i];
  const Trajectory& b = trajectories[j];
  const auto [first, last] = overlap(a, b);
  double worst = -1.0;
  for (int t = first + 1; t <= last; ++t) {
    const int step = t - 1 - a.emerge;
    if (step < 0 || step >= static_cast<int>(transforms_of_i.size())) continue;
    const auto& tf = transforms_of_i[step];
    if (!tf) continue;
    const double err = (b.point_at(t) - tf->apply(b.point_at(t - 1))).norm();
    worst = std::max(worst, err);
  }
  return worst < 0.0 ? kInf : worst;
}

double AffinityGraph::weight(std::uint32_t a, std::uint32_t b) const {
  if (a == b) return 0.0;
  if (a > b) std::swap(a, b);
  const AffinityEdge probe{a, b, 0.0f};
  const auto it = std::lower_bound(
      edges.begin(), edges.end(), probe,
      [](const AffinityEdge& lhs, const AffinityEdge& rhs) {
        return lhs.i < rhs.i || (lhs.i == rhs.i && lhs.j < rhs.j);
      });
  if (it == edges.end() || it->i != a || it->j != b) return 0.0;
  return it->weight;
}

AffinityGraph build_affinity(const std::vector<Trajectory>& trajectories,
                             const AffinityParams& params) {
  params.validate();
  AffinityGraph graph;
  graph.params = params;
  const std::uint32_t m = static_cast<std::uint32_t>(trajectories.size());
  if (m < 2) return graph;

  int max_frame = 0;
  for (const Trajectory& tr : trajectories) {
    max_frame = std::max(max_frame, tr.dissolve);
  }

  // Candidate pairs appear exactly once, at the later emergence frame: two
  // tracks within eps_a over their whole shared lifetime are within eps_a
  // at its first frame in particular.
  std::vector<std::vector<std::uint32_t>> emerging(max_frame + 1);
  for (std::uint32_t idx = 0; idx < m; ++idx) {
    emerging[trajectories[idx].emerge].push_back(idx);
  }

  struct Pair {
    std::uint32_t i, j;  // i < j
    double dist;         // max separation over the shared lifetime
  };
  std::vector<Pair> pairs;
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> grid;
  std::vector<std::uint32_t> alive;
  for (int t = 0; t <= max_frame; ++t) {
    if (emerging[t].empty()) continue;
    grid.clear();
    alive.clear();
    for (std::uint32_t idx = 0; idx < m; ++idx) {
      if (trajectories[idx].alive_at(t)) alive.push_back(idx);
    }
    for (std::uint32_t idx : alive) {
      const auto c = cell_of(trajectories[idx].point_at(t), params.eps_a);
      grid[pack_cell(c.x(), c.y(), c.z())].push_back(idx);
    }
    for (std::uint32_t idx : emerging[t]) {
      const auto base = cell_of(trajectories[idx].point_at(t), params.eps_a);
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dz = -1; dz <= 1; ++dz) {
            const auto it = grid.find(
                pack_cell(base.x() + dx, base.y() + dy, base.z() + dz));
            if (it == grid.end()) continue;
            for (std::uint32_t other : it->second) {
              if (other == idx) continue;
              // Claim the pair here only if the other track emerged
              // earlier, or ties on emergence with a smaller index.
              const Trajectory& o = trajectories[other];
              if (o.emerge == t && other > idx) continue;
              const Trajectory& self = trajectories[idx];
              const auto [first, last] = overlap(self, o);
              if (last - first + 1 < params.overlap_min) continue;
              const double dist = max_distance(self, o);
              if (dist >= params.eps_a) continue;
              pairs.push_back({std::min(idx, other), std::max(idx, other), dist});
            }
          }
        }
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return a.i < b.i || (a.i == b.i && a.j < b.j);
  });
  pairs.erase(std::unique(pairs.begin(), pairs.end(),
                          [](const Pair& a, const Pair& b) {
                            return a.i == b.i && a.j == b.j;
                          }),
              pairs.end());

  // eps-neighborhoods (for transform estimation) fall out of the same
  // sweep; keep the nearest neighbor_cap of them per trajectory.
  std::vector<std::vector<std::pair<double, std::uint32_t>>> close(m);
  for (const Pair& p : pairs) {
    if (p.dist < params.eps) {
      close[p.i].push_back({p.dist, p.j});
      close[p.j].push_back({p.dist, p.i});
    }
  }
  std::vector<std::vector<std::uint32_t>> eps_neighbors(m);
  for (std::uint32_t idx = 0; idx < m; ++idx) {
    auto& c = close[idx];
    std::sort(c.begin(), c.end());
    const size_t keep =
        std::min(c.size(), static_cast<size_t>(params.neighbor_cap));
    eps_neighbors[idx].reserve(keep);
    for (size_t k = 0; k < keep; ++k) eps_neighbors[idx].push_back(c[k].second);
    std::sort(eps_neighbors[idx].begin(), eps_neighbors[idx].end());
  }

  // Seeded per-pair dropout, independent of discovery order.
  std::vector<Pair> kept;
  kept.reserve(pairs.size());
  for (const Pair& p : pairs) {
    if (params.dropout > 0.0) {
      SplitMix64 rng(derive_seed(
          params.seed, "dropout",
          (static_cast<std::uint64_t>(p.i) << 32) | p.j));
      if (rng.unit() < params.dropout) continue;
    }
    kept.push_back(p);
  }

  // Transforms for every trajectory that anchors a surviving pair.
  std::vector<char> needed(m, 0);
  for (const Pair& p : kept) {
    needed[p.i] = 1;
    needed[p.j] = 1;
  }
  std::vector<std::vector<std::optional<RigidTransform>>> transforms(m);
  parallel_for(0, m, [&](std::size_t idx) {
    if (!needed[idx]) return;
    const Trajectory& tr = trajectories[idx];
    auto& steps = transforms[idx];
    steps.resize(std::max(0, tr.length() - 1));
    for (int s = 0; s < static_cast<int>(steps.size()); ++s) {
      const int t = tr.emerge + s + 1;
      const std::uint64_t seed = derive_seed(
          params.seed, "transform",
          (static_cast<std::uint64_t>(t) << 32) | idx);
      const auto result =
          estimate_step(trajectories, static_cast<std::uint32_t>(idx), t,
                        eps_neighbors[idx], params.ransac, seed);
      if (result) steps[s] = result->transform;
    }
  });

  std::vector<float> weights(kept.size(), 0.0f);
  parallel_for(size_t{0}, kept.size(), [&](size_t k) {
    const Pair& p = kept[k];
    const double e_ij = reconstruction_error(trajectories, p.i, p.j,
                                             transforms[p.i]);
    const double e_ji = reconstruction_error(trajectories, p.j, p.i,
                                             transforms[p.j]);
    const double e = std::min(e_ij, e_ji);
    if (!std::isfinite(e)) return;
    weights[k] = static_cast<float>(std::exp(-(e / params.tau) * (e / params.tau)));
  });
  for (size_t k = 0; k < kept.size(); ++k) {
    if (weights[k] > 0.0f) {
      graph.edges.push_back({kept[k].i, kept[k].j, weights[k]});
    }
  }
  return graph;
}

void save_affinity(const std::filesystem::path& path,
                   const AffinityGraph& graph) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["tau"] = graph.params.tau;
  header["eps"] = graph.params.eps;
  header["eps_a"] = graph.params.eps_a;
  header["dropout"] = graph.params.dropout;
  header["overlap_min"] = graph.params.overlap_min;
  header["neighbor_cap"] = graph.params.neighbor_cap;
  header["seed"] = graph.params.seed;
  header["edges"] = graph.edges.size();
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  const std::uint32_t len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), text.size());
  for (const AffinityEdge& e : graph.edges) {
    out.write(reinterpret_cast<const char*>(&e.i), sizeof(e.i));
    out.write(reinterpret_cast<const char*>(&e.j), sizeof(e.j));
    out.write(reinterpret_cast<const char*>(&e.weight), sizeof(e.weight));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

AffinityGraph load_affinity(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 20)) {
    throw std::runtime_error("corrupt affinity header in " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), len);
  const nlohmann::json header = nlohmann::json::parse(text);
  if (header.at("format_version").get<int>() != 1) {
    throw std::runtime_error("unsupported affinity format version");
  }
  AffinityGraph graph;
  graph.params.tau = header.at("tau").get<double>();
  graph.params.eps = header.at("eps").get<double>();
  graph.params.eps_a = header.at("eps_a").get<double>();
  graph.params.dropout = header.at("dropout").get<double>();
  graph.params.overlap_min = header.at("overlap_min").get<int>();
  graph.params.neighbor_cap = header.at("neighbor_cap").get<int>();
  graph.params.seed = header.at("seed").get<std::uint64_t>();
  const std::uint64_t count = header.at("edges").get<std::uint64_t>();
  graph.edges.resize(count);
  for (AffinityEdge& e : graph.edges) {
    in.read(reinterpret_cast<char*>(&e.i), sizeof(e.i));
    in.read(reinterpret_cast<char*>(&e.j), sizeof(e.j));
    in.read(reinterpret_cast<char*>(&e.weight), sizeof(e.weight));
  }
  if (!in) throw std::runtime_error("truncated affinity file " + path.string());
  return graph;
}

void save_affinity_csv(const std::filesystem::path& path,
                       const AffinityGraph& graph) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "i,j,weight\n";
  char buf[32];
  for (const AffinityEdge& e : graph.edges) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(e.weight));
    out << e.i << ',' << e.j << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace semtraj
