#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "semtraj/affinity.hpp"
#include "semtraj/semantic_map.hpp"

namespace semtraj {

struct EnergyParams {
  /// Weight of the smoothness term against the data term.
  double lambda = 1.0;
  /// Cap on full expansion cycles; convergence usually takes two or three.
  int max_sweeps = 10;

  void validate() const;
};

/// One class label (1-based) per trajectory, indexed the same way as the
/// trajectory vector and the affinity graph.
struct Labeling {
  std::vector<std::uint16_t> labels;
};

/// Per-trajectory argmax of the semantic map, ties to the lowest label.
Labeling argmax_labeling(const std::vector<SemanticMap>& maps);

/// Cost of a labeling. Data: every trajectory assigned something other than
/// its argmax label pays the map's confidence at that argmax entry, a
/// price for overriding what the cameras saw. Smoothness: every edge whose
/// endpoints disagree pays lambda times its affinity, each undirected edge
/// once.
double labeling_energy(const Labeling& labeling,
                       const std::vector<SemanticMap>& maps,
                       const AffinityGraph& graph, const EnergyParams& params);

/// One expansion move: the cheapest labeling reachable from `current` by
/// switching an arbitrary subset of trajectories to alpha, found as a
/// minimum cut. Trajectories already at alpha are fixed. The result's
/// energy never exceeds current's (the empty switch is always available).
Labeling expansion_move(const std::vector<SemanticMap>& maps, int label_count,
                        const AffinityGraph& graph, const EnergyParams& params,
                        const Labeling& current, std::uint16_t alpha);

struct EnergyTraceRow {
  int sweep = 0;            // 0 on the initial row
  std::uint16_t alpha = 0;  // 0 on the initial row
  double energy = 0.0;
};

/// Cycles expansion moves over all labels until a full sweep brings no
/// strict improvement (or max_sweeps). Moves are adopted only when they
/// lower the energy, so the trace is non-increasing and zero-cost
/// relabelings never displace the initialization. trace, when given,
/// receives the initial state plus one row per move.
Labeling alpha_expansion(const std::vector<SemanticMap>& maps, int label_count,
                         const AffinityGraph& graph, const EnergyParams& params,
                         const Labeling& init,
                         std::vector<EnergyTraceRow>* trace = nullptr);

struct TrajectoryReport {
  std::uint32_t index = 0;
  std::uint16_t argmax_label = 0;
  std::uint16_t final_label = 0;
  bool changed = false;  // final differs from argmax
};

struct InferenceResult {
  Labeling labeling;
  std::vector<TrajectoryReport> report;
  std::vector<EnergyTraceRow> trace;
  double final_energy = 0.0;
};

/// Full pass: argmax initialization, alpha-expansion, audit report. With
/// lambda 0 the initialization is already optimal and survives unchanged.
InferenceResult infer_labels(const std::vector<SemanticMap>& maps,
                             int label_count, const AffinityGraph& graph,
                             const EnergyParams& params);

/// CSV: trajectory_id, argmax_label, final_label, changed, class_1..N.
void save_labeling_csv(const std::filesystem::path& path,
                       const std::vector<std::uint32_t>& trajectory_ids,
                       const InferenceResult& result,
                       const std::vector<SemanticMap>& maps);

/// CSV: sweep, alpha, energy. Feed to a line plot to watch convergence.
void save_energy_trace_csv(const std::filesystem::path& path,
                           const std::vector<EnergyTraceRow>& trace);

}  // namespace semtraj
