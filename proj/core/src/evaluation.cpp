#include "semtraj/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>

#include "semtraj/parallel.hpp"
#include "semtraj/seeding.hpp"

namespace semtraj {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

MetricRow make_row(double condition, std::string method,
                   const std::vector<double>& samples) {
  MetricRow row;
  row.condition = condition;
  row.method = std::move(method);
  const auto [mean, sd] = mean_std(samples);
  row.mean = mean;
  row.std_dev = sd;
  row.n = static_cast<int>(samples.size());
  return row;
}

std::optional<Eigen::VectorXd> pooled_at(const Trajectory& traj, int frame,
                                         const ConfidenceSim& sim,
                                         const Rig& rig,
                                         const PoolParams& pool,
                                         PoolMethod method) {
  const auto views = gather_views(traj, frame, sim, rig);
  const auto pooled = method == PoolMethod::ViewPool ? view_pool(views, pool)
                                                     : average_pool(views);
  if (!pooled) return std::nullopt;
  return pooled->values;
}

const char* method_name(PoolMethod method) {
  return method == PoolMethod::ViewPool ? "view_pool" : "average_pool";
}

const char* method_name(AffinityMethod method) {
  return method == AffinityMethod::RigidAffinity ? "rigid_affinity"
                                                 : "eps_neighbors";
}

int argmax_of(const Eigen::VectorXf& confidence) {
  Eigen::Index best = 0;
  confidence.maxCoeff(&best);
  return static_cast<int>(best) + 1;
}

}  // namespace

double normalized_correlation(const Eigen::VectorXd& a,
                              const Eigen::VectorXd& b, bool mean_subtract) {
  if (a.size() != b.size() || a.size() == 0) {
    throw std::invalid_argument("correlation needs equal-length vectors");
  }
  Eigen::VectorXd x = a;
  Eigen::VectorXd y = b;
  if (mean_subtract) {
    x.array() -= x.mean();
    y.array() -= y.mean();
  }
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) return kNaN;
  return x.dot(y) / (nx * ny);
}

MetricReport temporal_consistency(const std::vector<Trajectory>& trajectories,
                                  const ConfidenceSim& sim, const Rig& rig,
                                  const TemporalConsistencyParams& params,
                                  PoolMethod method) {
  params.pool.validate();
  if (params.lags.empty()) {
    throw std::invalid_argument("temporal consistency needs at least one lag");
  }
  for (int lag : params.lags) {
    if (lag < 0) throw std::invalid_argument("lags must be non-negative");
  }

  // nc[traj * lags + k], NaN marks an excluded sample.
  const std::size_t lag_count = params.lags.size();
  std::vector<double> nc(trajectories.size() * lag_count, kNaN);
  parallel_for(0, trajectories.size(), [&](std::size_t i) {
    const Trajectory& traj = trajectories[i];
    const auto base =
        pooled_at(traj, traj.emerge, sim, rig, params.pool, method);
    if (!base) return;
    for (std::size_t k = 0; k < lag_count; ++k) {
      const int frame = traj.emerge + params.lags[k];
      if (frame > traj.dissolve) continue;
      const auto lagged = pooled_at(traj, frame, sim, rig, params.pool, method);
      if (!lagged) continue;
      const double value =
          normalized_correlation(*base, *lagged, params.mean_subtract);
      if (!std::isnan(value)) nc[i * lag_count + k] = value;
    }
  });

  MetricReport report;
  report.name = "temporal_consistency";
  char params_buf[96];
  std::snprintf(params_buf, sizeof(params_buf),
                "eps_v=%g mean_subtract=%d", params.pool.eps_v,
                params.mean_subtract ? 1 : 0);
  report.params = params_buf;
  for (std::size_t k = 0; k < lag_count; ++k) {
    std::vector<double> samples;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      const double value = nc[i * lag_count + k];
      if (!std::isnan(value)) samples.push_back(value);
    }
    report.rows.push_back(make_row(static_cast<double>(params.lags[k]),
                                   method_name(method), samples));
  }
  return report;
}

TruthMatch match_to_truth(const std::vector<Trajectory>& trajectories,
                          const std::vector<GroundTruthPoint>& truth) {
  TruthMatch match;
  match.point_index.resize(trajectories.size());
  match.body.resize(trajectories.size());
  match.label.resize(trajectories.size());
  if (trajectories.empty()) return match;
  if (truth.empty()) {
    throw std::invalid_argument("cannot match against empty ground truth");
  }
  parallel_for(0, trajectories.size(), [&](std::size_t i) {
    const Trajectory& traj = trajectories[i];
    // Sum of squared gaps over the first few frames; one frame would do in
    // noiseless scenes, a handful keeps contact boundaries unambiguous.
    const int probes = std::min(traj.length(), 5);
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < truth.size(); ++g) {
      double cost = 0.0;
      for (int k = 0; k < probes; ++k) {
        cost += (traj.points[k] -
                 truth[g].positions[static_cast<std::size_t>(traj.emerge) + k])
                    .squaredNorm();
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = g;
      }
    }
    match.point_index[i] = static_cast<std::uint32_t>(best);
    match.body[i] = truth[best].body_index;
    match.label[i] = static_cast<std::uint16_t>(truth[best].label);
  });
  return match;
}

MetricReport affinity_effectiveness(const std::vector<Trajectory>& trajectories,
                                    const std::vector<int>& body_of,
                                    const AffinityEffectivenessParams& params,
                                    AffinityMethod method,
                                    const ConfidenceSim* sim, const Rig* rig) {
  if (body_of.size() != trajectories.size()) {
    throw std::invalid_argument("body_of size / trajectory count mismatch");
  }
  if (params.bin_edges.size() < 2 ||
      !std::is_sorted(params.bin_edges.begin(), params.bin_edges.end()) ||
      params.bin_edges.front() < 0.0) {
    throw std::invalid_argument("bin_edges must be >= 2 ascending non-negative values");
  }
  if (params.pairs_per_bin < 1) {
    throw std::invalid_argument("pairs_per_bin must be >= 1");
  }
  AffinityParams affinity = params.affinity;
  affinity.eps_a = std::max(affinity.eps_a, params.bin_edges.back());
  affinity.dropout = 0.0;
  affinity.validate();

  // Pair gathering: max distance over the shared lifetime decides the bin.
  // Quadratic over trajectories, meant for evaluation-scale scenes.
  struct BinnedPair {
    std::uint32_t i;
    std::uint32_t j;
    int bin;
  };
  const auto& edges = params.bin_edges;
  std::vector<std::vector<BinnedPair>> per_i(trajectories.size());
  parallel_for(0, trajectories.size(), [&](std::size_t i) {
    const Trajectory& a = trajectories[i];
    for (std::size_t j = i + 1; j < trajectories.size(); ++j) {
      const Trajectory& b = trajectories[j];
      const int first = std::max(a.emerge, b.emerge);
      const int last = std::min(a.dissolve, b.dissolve);
      if (last - first + 1 < affinity.overlap_min) continue;
      double dist = 0.0;
      for (int t = first; t <= last; ++t) {
        dist = std::max(dist, (a.point_at(t) - b.point_at(t)).norm());
      }
      if (dist < edges.front() || dist >= edges.back()) continue;
      const int bin =
          static_cast<int>(std::upper_bound(edges.begin(), edges.end(), dist) -
                           edges.begin()) -
          1;
      per_i[i].push_back({static_cast<std::uint32_t>(i),
                          static_cast<std::uint32_t>(j), bin});
    }
  });

  const int bin_count = static_cast<int>(edges.size()) - 1;
  std::vector<std::vector<BinnedPair>> bins(bin_count);
  for (const auto& list : per_i) {
    for (const BinnedPair& p : list) bins[p.bin].push_back(p);
  }
  // Per-bin reservoir subsample, deterministic in (i, j) order.
  for (int b = 0; b < bin_count; ++b) {
    auto& all = bins[b];
    const auto cap = static_cast<std::size_t>(params.pairs_per_bin);
    if (all.size() <= cap) continue;
    SplitMix64 rng(derive_seed(params.seed, "affinity-bin",
                               static_cast<std::uint64_t>(b)));
    std::vector<BinnedPair> kept(all.begin(), all.begin() + cap);
    for (std::size_t m = cap; m < all.size(); ++m) {
      const std::uint64_t r = rng.next() % (m + 1);
      if (r < cap) kept[r] = all[m];
    }
    all = std::move(kept);
  }

  // Weights only matter for rigid-affinity claims.
  std::optional<AffinityGraph> graph;
  if (method == AffinityMethod::RigidAffinity) {
    graph = build_affinity(trajectories, affinity);
  }
  const auto claimed = [&](const BinnedPair& p) {
    if (method == AffinityMethod::EpsNeighbors) return true;
    return graph->weight(p.i, p.j) > 0.5;
  };

  MetricReport report;
  report.name = "affinity_effectiveness";
  report.seed = params.seed;
  char params_buf[128];
  std::snprintf(params_buf, sizeof(params_buf),
                "tau=%g eps=%g pairs_per_bin=%d", affinity.tau, affinity.eps,
                params.pairs_per_bin);
  report.params = params_buf;

  for (int b = 0; b < bin_count; ++b) {
    std::vector<double> mismatches;
    for (const BinnedPair& p : bins[b]) {
      const bool same = body_of[p.i] == body_of[p.j];
      mismatches.push_back(claimed(p) != same ? 1.0 : 0.0);
    }
    report.rows.push_back(make_row(edges[b + 1], method_name(method),
                                   mismatches));
  }

  if (sim != nullptr && rig != nullptr) {
    // The proxy available without ground truth: do the per-pixel argmax
    // labels at the two projections agree in a camera that sees both?
    const auto probe = [&](const BinnedPair& p) -> std::optional<double> {
      const Trajectory& a = trajectories[p.i];
      const Trajectory& b = trajectories[p.j];
      const int first = std::max(a.emerge, b.emerge);
      const int last = std::min(a.dissolve, b.dissolve);
      const int frame = (first + last) / 2;
      for (const auto& [cam, vis] : a.visibility[frame - a.emerge]) {
        if (vis <= 0.0f || b.visibility_of(frame, cam) <= 0.0) continue;
        const auto pa = rig->cameras[cam].project(a.point_at(frame));
        const auto pb = rig->cameras[cam].project(b.point_at(frame));
        if (!pa || !pb) continue;
        const int la = argmax_of(sim->field(cam, frame).query(*pa));
        const int lb = argmax_of(sim->field(cam, frame).query(*pb));
        return la == lb ? 0.0 : 1.0;
      }
      return std::nullopt;
    };
    const std::string proxy_name = std::string(method_name(method)) + "_2d";
    for (int b = 0; b < bin_count; ++b) {
      std::vector<double> mismatches;
      for (const BinnedPair& p : bins[b]) {
        if (!claimed(p)) continue;
        const auto e = probe(p);
        if (e) mismatches.push_back(*e);
      }
      report.rows.push_back(make_row(edges[b + 1], proxy_name, mismatches));
    }
  }
  return report;
}

MetricReport predictive_validity(const std::vector<Trajectory>& trajectories,
                                 const ConfidenceSim& sim, const Rig& rig,
                                 int label_count, const AffinityGraph& graph,
                                 const PredictiveValidityParams& params) {
  params.pool.validate();
  params.energy.validate();
  const int cameras = static_cast<int>(rig.cameras.size());
  if (params.subset_sizes.empty()) {
    throw std::invalid_argument("predictive validity needs subset sizes");
  }
  for (int size : params.subset_sizes) {
    if (size < 1 || size >= cameras) {
      throw std::invalid_argument(
          "subset sizes must be in [1, camera_count - 1]");
    }
  }
  if (params.trials < 1) {
    throw std::invalid_argument("trials must be >= 1");
  }

  MetricReport report;
  report.name = "predictive_validity";
  report.seed = params.seed;
  char params_buf[96];
  std::snprintf(params_buf, sizeof(params_buf), "trials=%d lambda=%g eps_v=%g",
                params.trials, params.energy.lambda, params.pool.eps_v);
  report.params = params_buf;

  for (std::size_t s = 0; s < params.subset_sizes.size(); ++s) {
    const int size = params.subset_sizes[s];
    std::vector<double> accuracy_vp;
    std::vector<double> accuracy_ap;
    for (int trial = 0; trial < params.trials; ++trial) {
      SplitMix64 rng(derive_seed(
          params.seed, "predictive",
          (static_cast<std::uint64_t>(s) << 32) |
              static_cast<std::uint64_t>(static_cast<std::uint32_t>(trial))));
      // Partial Fisher-Yates: the first `size` slots become the subset,
      // the held-out camera comes from the remainder.
      std::vector<int> perm(cameras);
      for (int c = 0; c < cameras; ++c) perm[c] = c;
      for (int k = 0; k < size; ++k) {
        const int pick =
            k + static_cast<int>(rng.next() %
                                 static_cast<std::uint64_t>(cameras - k));
        std::swap(perm[k], perm[pick]);
      }
      const int holdout =
          perm[size + static_cast<int>(
                          rng.next() %
                          static_cast<std::uint64_t>(cameras - size))];
      std::vector<std::uint16_t> subset(perm.begin(), perm.begin() + size);
      std::sort(subset.begin(), subset.end());

      for (const PoolMethod method :
           {PoolMethod::ViewPool, PoolMethod::AveragePool}) {
        std::vector<SemanticMap> maps(trajectories.size());
        parallel_for(0, trajectories.size(), [&](std::size_t i) {
          maps[i] = build_semantic_map(trajectories[i], sim, rig, params.pool,
                                       subset, method);
        });
        const InferenceResult inferred =
            infer_labels(maps, label_count, graph, params.energy);
        std::int64_t agree = 0;
        std::int64_t total = 0;
        for (std::size_t i = 0; i < trajectories.size(); ++i) {
          const Trajectory& traj = trajectories[i];
          const int label = inferred.labeling.labels[i];
          for (int t = traj.emerge; t <= traj.dissolve; ++t) {
            if (traj.visibility_of(t, holdout) <= params.pool.eps_v) continue;
            const auto proj = rig.cameras[holdout].project(traj.point_at(t));
            if (!proj) continue;
            const int seen = argmax_of(sim.field(holdout, t).query(*proj));
            agree += seen == label ? 1 : 0;
            ++total;
          }
        }
        if (total == 0) continue;
        const double acc =
            static_cast<double>(agree) / static_cast<double>(total);
        (method == PoolMethod::ViewPool ? accuracy_vp : accuracy_ap)
            .push_back(acc);
      }
    }
    report.rows.push_back(make_row(static_cast<double>(size),
                                   method_name(PoolMethod::ViewPool),
                                   accuracy_vp));
    report.rows.push_back(make_row(static_cast<double>(size),
                                   method_name(PoolMethod::AveragePool),
                                   accuracy_ap));
  }
  return report;
}

AccuracySummary accuracy_against_truth(
    const std::vector<std::uint16_t>& predicted,
    const std::vector<std::uint16_t>& truth, int label_count) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("predicted / truth size mismatch");
  }
  if (label_count < 1) {
    throw std::invalid_argument("label_count must be >= 1");
  }
  AccuracySummary summary;
  summary.per_class.assign(label_count, 0.0);
  summary.class_counts.assign(label_count, 0);
  summary.confusion.assign(label_count, std::vector<int>(label_count, 0));
  summary.total = static_cast<int>(truth.size());
  int hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 1 || t > label_count || p < 1 || p > label_count) {
      throw std::invalid_argument("label outside 1..label_count");
    }
    ++summary.confusion[t - 1][p - 1];
    ++summary.class_counts[t - 1];
    if (t == p) ++hits;
  }
  summary.overall =
      summary.total == 0 ? 0.0 : static_cast<double>(hits) / summary.total;
  for (int c = 0; c < label_count; ++c) {
    if (summary.class_counts[c] > 0) {
      summary.per_class[c] = static_cast<double>(summary.confusion[c][c]) /
                             summary.class_counts[c];
    }
  }
  return summary;
}

MetricReport ground_truth_accuracy(
    const std::vector<std::uint16_t>& argmax_labels,
    const std::vector<std::uint16_t>& inferred_labels,
    const std::vector<std::uint16_t>& truth, int label_count) {
  if (argmax_labels.size() != truth.size() ||
      inferred_labels.size() != truth.size()) {
    throw std::invalid_argument("labeling / truth size mismatch");
  }
  MetricReport report;
  report.name = "ground_truth_accuracy";

  const auto emit = [&](const std::vector<std::uint16_t>& labels,
                        const char* method) {
    // Overall row at condition 0, then recall per true class; statistics
    // come from the per-trajectory hit indicators.
    std::vector<double> overall;
    std::vector<std::vector<double>> per_class(label_count);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const int t = truth[i];
      if (t < 1 || t > label_count || labels[i] < 1 ||
          labels[i] > label_count) {
        throw std::invalid_argument("label outside 1..label_count");
      }
      const double hit = labels[i] == truth[i] ? 1.0 : 0.0;
      overall.push_back(hit);
      per_class[t - 1].push_back(hit);
    }
    report.rows.push_back(make_row(0.0, method, overall));
    for (int c = 0; c < label_count; ++c) {
      report.rows.push_back(make_row(c + 1.0, method, per_class[c]));
    }
  };
  emit(argmax_labels, "argmax");
  emit(inferred_labels, "inference");
  return report;
}

void save_metric_csv(const std::filesystem::path& path,
                     const MetricReport& report) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  out << "condition,method,mean,std,n\n";
  char buf[32];
  for (const MetricRow& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%.9g", row.condition);
    out << buf << ',' << row.method;
    std::snprintf(buf, sizeof(buf), "%.9g", row.mean);
    out << ',' << buf;
    std::snprintf(buf, sizeof(buf), "%.9g", row.std_dev);
    out << ',' << buf << ',' << row.n << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

void save_reports_json(const std::filesystem::path& path,
                       const std::vector<MetricReport>& reports) {
  nlohmann::json doc = nlohmann::json::array();
  for (const MetricReport& report : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const MetricRow& row : report.rows) {
      rows.push_back({{"condition", row.condition},
                      {"method", row.method},
                      {"mean", row.mean},
                      {"std", row.std_dev},
                      {"n", row.n}});
    }
    doc.push_back({{"name", report.name},
                   {"seed", report.seed},
                   {"scene_digest", report.scene_digest},
                   {"params", report.params},
                   {"rows", std::move(rows)}});
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  out << doc.dump(2) << '\n';
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

void save_confusion_csv(const std::filesystem::path& path,
                        const AccuracySummary& summary) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  out << "true_label,predicted_label,count\n";
  for (std::size_t t = 0; t < summary.confusion.size(); ++t) {
    for (std::size_t p = 0; p < summary.confusion[t].size(); ++p) {
      out << (t + 1) << ',' << (p + 1) << ',' << summary.confusion[t][p]
          << '\n';
    }
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

}  // namespace semtraj
