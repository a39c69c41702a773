#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semtraj/affinity.hpp"
#include "semtraj/inference.hpp"
#include "semtraj/semantic_map.hpp"
#include "semtraj/synthesis.hpp"

namespace semtraj {

/// One long-format row: a condition value (lag in frames, distance bin
/// upper edge, camera subset size, class id), the method that produced it,
/// and the sample statistics. n is the sample count behind the mean; rows
/// for empty bins carry n = 0 and zeroed statistics.
struct MetricRow {
  double condition = 0.0;
  std::string method;
  double mean = 0.0;
  double std_dev = 0.0;  // sample std, 0 for n < 2
  int n = 0;
};

struct MetricReport {
  std::string name;
  std::uint64_t seed = 0;
  /// Content hash of the scene that produced the inputs, caller-supplied.
  std::string scene_digest;
  /// Free-form parameter summary for the records.
  std::string params;
  std::vector<MetricRow> rows;
};

/// Cosine similarity, optionally after subtracting each vector's mean
/// first. NaN when either (shifted) vector has zero norm. Invariant to
/// positive rescaling of either argument.
double normalized_correlation(const Eigen::VectorXd& a,
                              const Eigen::VectorXd& b,
                              bool mean_subtract = false);

struct TemporalConsistencyParams {
  /// Lags in frames; lag 0 compares the emergence frame with itself.
  std::vector<int> lags;
  PoolParams pool;
  /// Use the mean-subtracted correlation variant.
  bool mean_subtract = false;
};

/// Correlation between a trajectory's pooled confidence at its emergence
/// frame and at each lag, averaged over trajectories. Trajectories shorter
/// than a lag, or without a poolable view at either end, are excluded from
/// that lag's statistics.
MetricReport temporal_consistency(const std::vector<Trajectory>& trajectories,
                                  const ConfidenceSim& sim, const Rig& rig,
                                  const TemporalConsistencyParams& params,
                                  PoolMethod method);

/// Ground-truth identity for reconstructed trajectories, matched by
/// position over the first frames of each trajectory's lifespan.
struct TruthMatch {
  std::vector<std::uint32_t> point_index;  // into the ground-truth array
  std::vector<int> body;
  std::vector<std::uint16_t> label;
};

TruthMatch match_to_truth(const std::vector<Trajectory>& trajectories,
                          const std::vector<GroundTruthPoint>& truth);

enum class AffinityMethod { RigidAffinity, EpsNeighbors };

struct AffinityEffectivenessParams {
  /// Ascending distance bin edges in meters; bin k covers
  /// [bin_edges[k], bin_edges[k+1]).
  std::vector<double> bin_edges = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  /// Seeded subsample cap per bin.
  int pairs_per_bin = 200;
  std::uint64_t seed = 0;
  /// Transform and weighting parameters. eps_a is raised to the last bin
  /// edge and dropout forced off so every candidate pair gets a weight.
  AffinityParams affinity;
};

/// Mismatch rate of same-object claims per inter-trajectory distance bin,
/// scored against ground-truth body identity. RigidAffinity claims a pair
/// when its affinity weight exceeds 0.5; EpsNeighbors claims every pair
/// within the bin's upper edge (the proximity heuristic at that range).
/// When sim and rig are given, a second row set per bin (method suffixed
/// "_2d") scores claimed pairs by whether the per-pixel argmax labels at
/// the two projections disagree in a shared camera, the proxy available
/// without ground truth.
MetricReport affinity_effectiveness(const std::vector<Trajectory>& trajectories,
                                    const std::vector<int>& body_of,
                                    const AffinityEffectivenessParams& params,
                                    AffinityMethod method,
                                    const ConfidenceSim* sim = nullptr,
                                    const Rig* rig = nullptr);

struct PredictiveValidityParams {
  std::vector<int> subset_sizes = {1, 5, 10, 20, 40};
  int trials = 10;
  std::uint64_t seed = 0;
  PoolParams pool;
  EnergyParams energy;
};

/// Cross-validation over camera subsets: per trial, semantic maps are
/// built from a sampled subset only, labels inferred, and every trajectory
/// projected into a held-out camera; agreement with that camera's argmax
/// confidence is scored over the frames where the trajectory is visible to
/// it. Both pooling methods run on identical subsets, so the comparison is
/// paired. Conditions are subset sizes; each size must leave at least one
/// camera held out.
MetricReport predictive_validity(const std::vector<Trajectory>& trajectories,
                                 const ConfidenceSim& sim, const Rig& rig,
                                 int label_count, const AffinityGraph& graph,
                                 const PredictiveValidityParams& params);

struct AccuracySummary {
  double overall = 0.0;
  std::vector<double> per_class;            // recall by true label
  std::vector<int> class_counts;            // trajectories per true label
  std::vector<std::vector<int>> confusion;  // [true - 1][predicted - 1]
  int total = 0;
};

AccuracySummary accuracy_against_truth(
    const std::vector<std::uint16_t>& predicted,
    const std::vector<std::uint16_t>& truth, int label_count);

/// Overall (condition 0) and per-class (condition = class id) accuracy for
/// the argmax-only and post-inference labelings, side by side.
MetricReport ground_truth_accuracy(
    const std::vector<std::uint16_t>& argmax_labels,
    const std::vector<std::uint16_t>& inferred_labels,
    const std::vector<std::uint16_t>& truth, int label_count);

/// CSV: condition,method,mean,std,n.
void save_metric_csv(const std::filesystem::path& path,
                     const MetricReport& report);

/// Combined JSON summary of several reports.
void save_reports_json(const std::filesystem::path& path,
                       const std::vector<MetricReport>& reports);

/// CSV: true_label,predicted_label,count.
void save_confusion_csv(const std::filesystem::path& path,
                        const AccuracySummary& summary);

}  // namespace semtraj
