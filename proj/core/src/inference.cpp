#include "semtraj/inference.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

#include "semtraj/maxflow.hpp"
#include "semtraj/parallel.hpp"

namespace semtraj {
namespace {

constexpr std::uint32_t kFixed = std::numeric_limits<std::uint32_t>::max();

struct Unaries {
  std::vector<std::uint16_t> argmax;  // 1-based
  std::vector<double> penalty;        // confidence at the argmax entry
};

Unaries unary_terms(const std::vector<SemanticMap>& maps) {
  Unaries u;
  u.argmax.resize(maps.size());
  u.penalty.resize(maps.size());
  parallel_for(0, maps.size(), [&](std::size_t i) {
    const int label = argmax_label(maps[i]);
    u.argmax[i] = static_cast<std::uint16_t>(label);
    u.penalty[i] = maps[i].values[label - 1];
  });
  return u;
}

void check_maps(const std::vector<SemanticMap>& maps, int label_count) {
  if (label_count < 1) {
    throw std::invalid_argument("label_count must be >= 1");
  }
  for (const SemanticMap& m : maps) {
    if (m.values.size() != label_count) {
      throw std::invalid_argument(
          "semantic map length disagrees with label_count");
    }
  }
}

void check_edges(const AffinityGraph& graph, std::size_t count) {
  for (const AffinityEdge& e : graph.edges) {
    if (e.i >= count || e.j >= count) {
      throw std::invalid_argument(
          "affinity edge references a trajectory out of range");
    }
  }
}

void check_labels(const std::vector<std::uint16_t>& labels, std::size_t count,
                  int label_count) {
  if (labels.size() != count) {
    throw std::invalid_argument("labeling size / semantic map count mismatch");
  }
  for (std::uint16_t l : labels) {
    if (l < 1 || l > label_count) {
      throw std::invalid_argument("label outside 1..label_count");
    }
  }
}

double energy_of(const std::vector<std::uint16_t>& labels, const Unaries& u,
                 const AffinityGraph& graph, double lambda) {
  double data = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != u.argmax[i]) data += u.penalty[i];
  }
  double smooth = 0.0;
  for (const AffinityEdge& e : graph.edges) {
    if (labels[e.i] != labels[e.j]) smooth += static_cast<double>(e.weight);
  }
  return data + lambda * smooth;
}

// Binary subproblem for one alpha: nodes that keep their label sit on the
// source side of the cut, nodes that take alpha on the sink side. The
// pairwise cost (0 on agreement, w on disagreement) is submodular here, so
// it splits into signed unary shifts plus one non-negative cut edge.
std::vector<std::uint16_t> expand(const std::vector<std::uint16_t>& current,
                                  std::uint16_t alpha, const Unaries& u,
                                  const AffinityGraph& graph, double lambda) {
  const std::size_t n = current.size();
  std::vector<std::uint32_t> node_of(n, kFixed);
  std::vector<std::uint32_t> free_nodes;
  for (std::size_t i = 0; i < n; ++i) {
    if (current[i] != alpha) {
      node_of[i] = static_cast<std::uint32_t>(free_nodes.size());
      free_nodes.push_back(static_cast<std::uint32_t>(i));
    }
  }
  if (free_nodes.empty()) return current;

  std::vector<double> keep_cost(free_nodes.size());
  std::vector<double> switch_cost(free_nodes.size());
  for (std::size_t k = 0; k < free_nodes.size(); ++k) {
    const std::uint32_t i = free_nodes[k];
    keep_cost[k] = current[i] != u.argmax[i] ? u.penalty[i] : 0.0;
    switch_cost[k] = alpha != u.argmax[i] ? u.penalty[i] : 0.0;
  }

  struct PairTerm {
    std::uint32_t a;
    std::uint32_t b;
    double cap;
  };
  std::vector<PairTerm> pair_terms;
  pair_terms.reserve(graph.edges.size());
  for (const AffinityEdge& e : graph.edges) {
    const double w = lambda * static_cast<double>(e.weight);
    if (w <= 0.0) continue;
    const std::uint32_t a = node_of[e.i];
    const std::uint32_t b = node_of[e.j];
    if (a != kFixed && b != kFixed) {
      // Costs: keep/keep pays w only when the current labels differ,
      // keep/switch and switch/keep pay w, switch/switch pays 0.
      const double both_keep = current[e.i] != current[e.j] ? w : 0.0;
      switch_cost[a] += w - both_keep;
      switch_cost[b] -= w;
      pair_terms.push_back({a, b, 2.0 * w - both_keep});
    } else if (a != kFixed) {
      // The other endpoint is already alpha; keeping this one disagrees.
      keep_cost[a] += w;
    } else if (b != kFixed) {
      keep_cost[b] += w;
    }
  }

  const auto source = static_cast<std::uint32_t>(free_nodes.size());
  const std::uint32_t sink = source + 1;
  MaxFlow flow(free_nodes.size() + 2);
  for (std::size_t k = 0; k < free_nodes.size(); ++k) {
    // Shift the pair of unary costs non-negative; only the difference
    // matters to the cut, and energies are recomputed from the labeling.
    const double shift = std::min(keep_cost[k], switch_cost[k]);
    const double from_source = switch_cost[k] - shift;
    const double to_sink = keep_cost[k] - shift;
    const auto node = static_cast<std::uint32_t>(k);
    if (from_source > 0.0) flow.add_edge(source, node, from_source);
    if (to_sink > 0.0) flow.add_edge(node, sink, to_sink);
  }
  for (const PairTerm& p : pair_terms) {
    if (p.cap > 0.0) flow.add_edge(p.a, p.b, p.cap);
  }
  flow.solve(source, sink);

  std::vector<std::uint16_t> next = current;
  for (std::size_t k = 0; k < free_nodes.size(); ++k) {
    if (!flow.source_side(static_cast<std::uint32_t>(k))) {
      next[free_nodes[k]] = alpha;
    }
  }
  return next;
}

}  // namespace

void EnergyParams::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  if (max_sweeps < 1) {
    throw std::invalid_argument("max_sweeps must be >= 1");
  }
}

Labeling argmax_labeling(const std::vector<SemanticMap>& maps) {
  Labeling out;
  out.labels.resize(maps.size());
  parallel_for(0, maps.size(), [&](std::size_t i) {
    out.labels[i] = static_cast<std::uint16_t>(argmax_label(maps[i]));
  });
  return out;
}

double labeling_energy(const Labeling& labeling,
                       const std::vector<SemanticMap>& maps,
                       const AffinityGraph& graph,
                       const EnergyParams& params) {
  params.validate();
  if (labeling.labels.size() != maps.size()) {
    throw std::invalid_argument("labeling size / semantic map count mismatch");
  }
  check_edges(graph, maps.size());
  const Unaries u = unary_terms(maps);
  // Data penalties fill per trajectory in parallel, then reduce in index
  // order so the sum is reproducible.
  std::vector<double> data(maps.size(), 0.0);
  parallel_for(0, maps.size(), [&](std::size_t i) {
    if (labeling.labels[i] != u.argmax[i]) data[i] = u.penalty[i];
  });
  double total = 0.0;
  for (double d : data) total += d;
  double smooth = 0.0;
  for (const AffinityEdge& e : graph.edges) {
    if (labeling.labels[e.i] != labeling.labels[e.j]) {
      smooth += static_cast<double>(e.weight);
    }
  }
  return total + params.lambda * smooth;
}

Labeling expansion_move(const std::vector<SemanticMap>& maps, int label_count,
                        const AffinityGraph& graph, const EnergyParams& params,
                        const Labeling& current, std::uint16_t alpha) {
  params.validate();
  check_maps(maps, label_count);
  check_edges(graph, maps.size());
  check_labels(current.labels, maps.size(), label_count);
  if (alpha < 1 || alpha > label_count) {
    throw std::invalid_argument("alpha outside 1..label_count");
  }
  const Unaries u = unary_terms(maps);
  return Labeling{expand(current.labels, alpha, u, graph, params.lambda)};
}

Labeling alpha_expansion(const std::vector<SemanticMap>& maps, int label_count,
                         const AffinityGraph& graph, const EnergyParams& params,
                         const Labeling& init,
                         std::vector<EnergyTraceRow>* trace) {
  params.validate();
  check_maps(maps, label_count);
  check_edges(graph, maps.size());
  check_labels(init.labels, maps.size(), label_count);

  const Unaries u = unary_terms(maps);
  std::vector<std::uint16_t> labels = init.labels;
  double energy = energy_of(labels, u, graph, params.lambda);
  if (trace) trace->push_back({0, 0, energy});
  for (int sweep = 1; sweep <= params.max_sweeps; ++sweep) {
    bool improved = false;
    for (int alpha = 1; alpha <= label_count; ++alpha) {
      std::vector<std::uint16_t> candidate = expand(
          labels, static_cast<std::uint16_t>(alpha), u, graph, params.lambda);
      const double candidate_energy =
          energy_of(candidate, u, graph, params.lambda);
      // Strictly-better only: ties keep the incumbent, which pins the
      // lambda = 0 result to the initialization.
      if (candidate_energy < energy) {
        labels = std::move(candidate);
        energy = candidate_energy;
        improved = true;
      }
      if (trace) {
        trace->push_back({sweep, static_cast<std::uint16_t>(alpha), energy});
      }
    }
    if (!improved) break;
  }
  return Labeling{std::move(labels)};
}

InferenceResult infer_labels(const std::vector<SemanticMap>& maps,
                             int label_count, const AffinityGraph& graph,
                             const EnergyParams& params) {
  params.validate();
  check_maps(maps, label_count);
  check_edges(graph, maps.size());

  InferenceResult result;
  const Labeling init = argmax_labeling(maps);
  result.labeling =
      alpha_expansion(maps, label_count, graph, params, init, &result.trace);
  result.final_energy = result.trace.back().energy;
  result.report.resize(maps.size());
  parallel_for(0, maps.size(), [&](std::size_t i) {
    TrajectoryReport& row = result.report[i];
    row.index = static_cast<std::uint32_t>(i);
    row.argmax_label = init.labels[i];
    row.final_label = result.labeling.labels[i];
    row.changed = row.final_label != row.argmax_label;
  });
  return result;
}

void save_labeling_csv(const std::filesystem::path& path,
                       const std::vector<std::uint32_t>& trajectory_ids,
                       const InferenceResult& result,
                       const std::vector<SemanticMap>& maps) {
  if (trajectory_ids.size() != result.report.size() ||
      maps.size() != result.report.size()) {
    throw std::invalid_argument("labeling csv inputs disagree on count");
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  const int N = maps.empty() ? 0 : static_cast<int>(maps[0].values.size());
  out << "trajectory_id,argmax_label,final_label,changed";
  for (int k = 1; k <= N; ++k) out << ",class_" << k;
  out << '\n';
  for (std::size_t i = 0; i < result.report.size(); ++i) {
    const TrajectoryReport& row = result.report[i];
    out << trajectory_ids[i] << ',' << row.argmax_label << ','
        << row.final_label << ',' << (row.changed ? 1 : 0);
    char buf[32];
    for (int k = 0; k < N; ++k) {
      std::snprintf(buf, sizeof(buf), "%.9g", maps[i].values[k]);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

void save_energy_trace_csv(const std::filesystem::path& path,
                           const std::vector<EnergyTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  out << "sweep,alpha,energy\n";
  char buf[32];
  for (const EnergyTraceRow& row : trace) {
    std::snprintf(buf, sizeof(buf), "%.9g", row.energy);
    out << row.sweep << ',' << row.alpha << ',' << buf << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

}  // namespace semtraj
