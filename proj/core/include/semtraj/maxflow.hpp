#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace semtraj {

/// Dinic's max-flow over double capacities. Sized for the expansion graphs
/// label inference throws at it: a few thousand nodes, rebuilt per move, so
/// the structure is append-only and solves exactly once.
class MaxFlow {
 public:
  /// Residual capacity below this is treated as saturated, which keeps the
  /// augmenting search from chasing rounding dust.
  static constexpr double kEps = 1e-12;

  explicit MaxFlow(std::size_t node_count);

  /// Adds the directed edge from->to and its reverse in one call. backward
  /// is the reverse direction's own capacity (default none), not residual
  /// bookkeeping.
  void add_edge(std::uint32_t from, std::uint32_t to, double forward,
                double backward = 0.0);

  /// Runs to completion and returns the flow value. One shot per instance.
  double solve(std::uint32_t source, std::uint32_t sink);

  /// After solve: true when the node is still reachable from the source in
  /// the residual graph, i.e. sits on the source side of the minimum cut.
  bool source_side(std::uint32_t node) const;

  /// Original capacity crossing from the source side to the rest. Equal to
  /// the flow value whenever the solve is self-consistent, which the tests
  /// lean on as the max-flow = min-cut audit.
  double cut_capacity() const;

  /// Worst violation of flow conservation: the largest net imbalance over
  /// interior nodes, or the mismatch between the returned value and the
  /// net flow at either terminal. Zero for a valid flow, up to rounding.
  double flow_conservation_gap() const;

  std::size_t node_count() const { return adjacency_.size(); }

 private:
  struct Edge {
    std::uint32_t to = 0;
    double residual = 0.0;
    double capacity = 0.0;  // as added, kept for the cut audit
  };

  bool bfs_levels();
  double push(std::uint32_t node, double limit);

  std::vector<Edge> edges_;  // edge k pairs with k ^ 1
  std::vector<std::vector<std::uint32_t>> adjacency_;
  std::vector<int> level_;
  std::vector<std::uint32_t> cursor_;
  std::uint32_t source_ = 0;
  std::uint32_t sink_ = 0;
  double flow_ = 0.0;
  bool solved_ = false;
};

}  // namespace semtraj
