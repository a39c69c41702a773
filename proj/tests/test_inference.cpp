#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "semtraj/inference.hpp"
#include "semtraj/seeding.hpp"

using namespace semtraj;

namespace {

SemanticMap make_map(std::initializer_list<double> values) {
  SemanticMap map;
  map.values = Eigen::VectorXd(static_cast<Eigen::Index>(values.size()));
  Eigen::Index k = 0;
  for (double v : values) map.values[k++] = v;
  map.pooled_frames = 1;
  return map;
}

AffinityGraph graph_of(std::vector<AffinityEdge> edges) {
  AffinityGraph graph;
  graph.edges = std::move(edges);
  std::sort(graph.edges.begin(), graph.edges.end(),
            [](const AffinityEdge& a, const AffinityEdge& b) {
              return a.i != b.i ? a.i < b.i : a.j < b.j;
            });
  return graph;
}

// Random instance small enough to enumerate. Confidence vectors stay away
// from exact ties so the argmax labels are unambiguous.
struct RandomInstance {
  std::vector<SemanticMap> maps;
  AffinityGraph graph;
  int label_count = 0;
};

RandomInstance random_instance(SplitMix64& rng, int trajectories, int labels,
                               double edge_rate) {
  RandomInstance inst;
  inst.label_count = labels;
  for (int i = 0; i < trajectories; ++i) {
    SemanticMap map;
    map.values = Eigen::VectorXd(labels);
    for (int k = 0; k < labels; ++k) map.values[k] = 0.05 + 0.9 * rng.unit();
    map.pooled_frames = 1;
    inst.maps.push_back(std::move(map));
  }
  std::vector<AffinityEdge> edges;
  for (std::uint32_t i = 0; i + 1 < static_cast<std::uint32_t>(trajectories);
       ++i) {
    for (std::uint32_t j = i + 1; j < static_cast<std::uint32_t>(trajectories);
         ++j) {
      if (rng.unit() < edge_rate) {
        edges.push_back({i, j, static_cast<float>(rng.unit())});
      }
    }
  }
  inst.graph = graph_of(std::move(edges));
  return inst;
}

// Exhaustive optimum by odometer over every labeling.
double brute_optimum(const RandomInstance& inst, const EnergyParams& params) {
  const std::size_t n = inst.maps.size();
  std::vector<std::uint16_t> labels(n, 1);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    best = std::min(best,
                    labeling_energy(Labeling{labels}, inst.maps, inst.graph,
                                    params));
    std::size_t k = 0;
    while (k < n && labels[k] == inst.label_count) {
      labels[k] = 1;
      ++k;
    }
    if (k == n) break;
    ++labels[k];
  }
  return best;
}

}  // namespace

TEST_CASE("labeling energy of the ground state is zero") {
  std::vector<SemanticMap> maps = {make_map({0.9, 0.1}), make_map({0.8, 0.2}),
                                   make_map({0.7, 0.3})};
  const AffinityGraph graph =
      graph_of({{0, 1, 0.9f}, {1, 2, 0.8f}, {0, 2, 0.7f}});
  const Labeling all_one{{1, 1, 1}};
  CHECK(labeling_energy(all_one, maps, graph, {}) == 0.0);
}

TEST_CASE("labeling energy hand sum for one flipped trajectory") {
  // Trajectory 0 holds confidence 0.7 for its argmax label and two incident
  // edges of weight 0.9; assigning it the other label costs
  // 0.7 + lambda * (0.9 + 0.9).
  std::vector<SemanticMap> maps = {make_map({0.7, 0.3}), make_map({0.8, 0.2}),
                                   make_map({0.9, 0.1})};
  const AffinityGraph graph = graph_of({{0, 1, 0.9f}, {0, 2, 0.9f}});
  const Labeling flipped{{2, 1, 1}};
  EnergyParams params;
  params.lambda = 1.0;
  CHECK(labeling_energy(flipped, maps, graph, params) ==
        doctest::Approx(2.5).epsilon(1e-6));
  // Doubling lambda scales only the smoothness half; a double-counted edge
  // set would land on 7.9 instead.
  params.lambda = 2.0;
  CHECK(labeling_energy(flipped, maps, graph, params) ==
        doctest::Approx(4.3).epsilon(1e-6));
}

TEST_CASE("labeling energy with lambda zero is the data term alone") {
  SplitMix64 rng(derive_seed(99, "inference-lambda0-energy", 0));
  for (int trial = 0; trial < 20; ++trial) {
    RandomInstance inst = random_instance(rng, 7, 3, 0.5);
    std::vector<std::uint16_t> labels(7);
    for (auto& l : labels) {
      l = static_cast<std::uint16_t>(1 + rng.next() % 3);
    }
    EnergyParams params;
    params.lambda = 0.0;
    double expected = 0.0;
    for (std::size_t i = 0; i < inst.maps.size(); ++i) {
      Eigen::Index best = 0;
      inst.maps[i].values.maxCoeff(&best);
      if (labels[i] != best + 1) expected += inst.maps[i].values[best];
    }
    CHECK(labeling_energy(Labeling{labels}, inst.maps, inst.graph, params) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("alpha expansion with lambda zero returns the argmax labels") {
  SplitMix64 rng(derive_seed(99, "inference-lambda0-expansion", 0));
  EnergyParams params;
  params.lambda = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    RandomInstance inst = random_instance(rng, 9, 4, 0.4);
    const Labeling target = argmax_labeling(inst.maps);
    // Start fully wrong: each trajectory one label past its argmax.
    Labeling init;
    for (std::uint16_t l : target.labels) {
      init.labels.push_back(
          static_cast<std::uint16_t>(l % inst.label_count + 1));
    }
    const Labeling out = alpha_expansion(inst.maps, inst.label_count,
                                         inst.graph, params, init);
    CHECK(out.labels == target.labels);

    const InferenceResult full =
        infer_labels(inst.maps, inst.label_count, inst.graph, params);
    CHECK(full.labeling.labels == target.labels);
    for (const TrajectoryReport& row : full.report) CHECK_FALSE(row.changed);
  }
}

TEST_CASE("expansion move is the exact minimum over single-label switches") {
  SplitMix64 rng(derive_seed(99, "inference-move-oracle", 0));
  EnergyParams params;
  for (int trial = 0; trial < 20; ++trial) {
    RandomInstance inst = random_instance(rng, 9, 3, 0.5);
    params.lambda = trial % 2 == 0 ? 1.0 : 0.4;
    std::vector<std::uint16_t> current(9);
    for (auto& l : current) {
      l = static_cast<std::uint16_t>(1 + rng.next() % 3);
    }
    for (std::uint16_t alpha = 1; alpha <= 3; ++alpha) {
      const Labeling moved = expansion_move(inst.maps, 3, inst.graph, params,
                                            Labeling{current}, alpha);
      // Enumerate every subset of the movable trajectories.
      std::vector<std::size_t> movable;
      for (std::size_t i = 0; i < current.size(); ++i) {
        if (current[i] != alpha) movable.push_back(i);
      }
      double best = std::numeric_limits<double>::infinity();
      for (std::uint32_t mask = 0; mask < (1u << movable.size()); ++mask) {
        std::vector<std::uint16_t> labels = current;
        for (std::size_t b = 0; b < movable.size(); ++b) {
          if (mask & (1u << b)) labels[movable[b]] = alpha;
        }
        best = std::min(best, labeling_energy(Labeling{labels}, inst.maps,
                                              inst.graph, params));
      }
      const double moved_energy =
          labeling_energy(moved, inst.maps, inst.graph, params);
      CHECK(std::abs(moved_energy - best) <= 1e-9);
      // Movable trajectories only change to alpha, everything else stays.
      for (std::size_t i = 0; i < current.size(); ++i) {
        if (moved.labels[i] != current[i]) CHECK(moved.labels[i] == alpha);
      }
    }
  }
}

TEST_CASE("inference corrects an adversarially flipped trajectory") {
  // Two six-trajectory bodies with strong interior edges. Trajectory 2's
  // recognizer output points at the wrong body; the smoothness term must
  // pull it back, and the result has to tie the exhaustive optimum.
  std::vector<SemanticMap> maps;
  for (int i = 0; i < 6; ++i) maps.push_back(make_map({0.85, 0.15}));
  for (int i = 0; i < 6; ++i) maps.push_back(make_map({0.15, 0.85}));
  maps[2] = make_map({0.2, 0.8});  // flipped
  std::vector<AffinityEdge> edges;
  for (std::uint32_t i = 0; i < 6; ++i) {
    for (std::uint32_t j = i + 1; j < 6; ++j) {
      edges.push_back({i, j, 0.92f});
      edges.push_back({i + 6, j + 6, 0.92f});
    }
  }
  edges.push_back({5, 6, 0.005f});
  edges.push_back({0, 11, 0.005f});
  const AffinityGraph graph = graph_of(std::move(edges));
  EnergyParams params;

  const InferenceResult result = infer_labels(maps, 2, graph, params);
  for (std::uint32_t i = 0; i < 12; ++i) {
    CHECK(result.labeling.labels[i] == (i < 6 ? 1 : 2));
    CHECK(result.report[i].changed == (i == 2));
  }
  // Optimum pays the flipped unary plus the two cross-body edges.
  CHECK(result.final_energy == doctest::Approx(0.81).epsilon(1e-6));
  RandomInstance inst{maps, graph, 2};
  CHECK(result.final_energy ==
        doctest::Approx(brute_optimum(inst, params)).epsilon(1e-12));
}

TEST_CASE("inference leaves a clean scene untouched") {
  std::vector<SemanticMap> maps;
  for (int i = 0; i < 6; ++i) maps.push_back(make_map({0.85, 0.15}));
  for (int i = 0; i < 6; ++i) maps.push_back(make_map({0.15, 0.85}));
  std::vector<AffinityEdge> edges;
  for (std::uint32_t i = 0; i < 6; ++i) {
    for (std::uint32_t j = i + 1; j < 6; ++j) {
      edges.push_back({i, j, 0.92f});
      edges.push_back({i + 6, j + 6, 0.92f});
    }
  }
  const AffinityGraph graph = graph_of(std::move(edges));
  const InferenceResult result = infer_labels(maps, 2, graph, {});
  CHECK(result.final_energy == 0.0);
  for (const TrajectoryReport& row : result.report) CHECK_FALSE(row.changed);
}

TEST_CASE("alpha expansion stays within twice the exhaustive optimum") {
  SplitMix64 rng(derive_seed(99, "inference-2x-oracle", 0));
  const double lambdas[] = {0.3, 1.0, 2.5};
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 4 + static_cast<int>(rng.next() % 5);       // 4..8
    const int labels = 2 + static_cast<int>(rng.next() % 2);  // 2..3
    RandomInstance inst = random_instance(rng, n, labels, 0.5);
    EnergyParams params;
    params.lambda = lambdas[trial % 3];
    const InferenceResult result =
        infer_labels(inst.maps, inst.label_count, inst.graph, params);
    const double optimum = brute_optimum(inst, params);
    CHECK(result.final_energy <= 2.0 * optimum + 1e-9);
    CHECK(result.final_energy >= optimum - 1e-9);
    CHECK(labeling_energy(result.labeling, inst.maps, inst.graph, params) ==
          doctest::Approx(result.final_energy).epsilon(1e-12));
  }
}

TEST_CASE("energy trace never increases and ends at the final energy") {
  SplitMix64 rng(derive_seed(99, "inference-trace", 0));
  for (int trial = 0; trial < 10; ++trial) {
    RandomInstance inst = random_instance(rng, 12, 4, 0.4);
    const InferenceResult result =
        infer_labels(inst.maps, inst.label_count, inst.graph, {});
    REQUIRE(!result.trace.empty());
    CHECK(result.trace.front().sweep == 0);
    CHECK(result.trace.front().alpha == 0);
    for (std::size_t k = 1; k < result.trace.size(); ++k) {
      CHECK(result.trace[k].energy <= result.trace[k - 1].energy);
      CHECK(result.trace[k].sweep >= 1);
    }
    CHECK(result.trace.back().energy == result.final_energy);
    CHECK(result.final_energy <= result.trace.front().energy);
  }
}

TEST_CASE("inference with no edges keeps the argmax labels") {
  SplitMix64 rng(derive_seed(99, "inference-no-edges", 0));
  RandomInstance inst = random_instance(rng, 15, 4, 0.0);
  REQUIRE(inst.graph.edges.empty());
  const InferenceResult result = infer_labels(inst.maps, 4, inst.graph, {});
  CHECK(result.labeling.labels == argmax_labeling(inst.maps).labels);
  CHECK(result.final_energy == 0.0);
}

TEST_CASE("inference on an empty scene is empty") {
  const InferenceResult result = infer_labels({}, 3, AffinityGraph{}, {});
  CHECK(result.labeling.labels.empty());
  CHECK(result.report.empty());
  CHECK(result.final_energy == 0.0);
}

TEST_CASE("inference is deterministic") {
  SplitMix64 rng_a(derive_seed(99, "inference-determinism", 0));
  SplitMix64 rng_b(derive_seed(99, "inference-determinism", 0));
  RandomInstance a = random_instance(rng_a, 14, 3, 0.5);
  RandomInstance b = random_instance(rng_b, 14, 3, 0.5);
  const InferenceResult ra = infer_labels(a.maps, 3, a.graph, {});
  const InferenceResult rb = infer_labels(b.maps, 3, b.graph, {});
  CHECK(ra.labeling.labels == rb.labeling.labels);
  REQUIRE(ra.trace.size() == rb.trace.size());
  for (std::size_t k = 0; k < ra.trace.size(); ++k) {
    CHECK(ra.trace[k].sweep == rb.trace[k].sweep);
    CHECK(ra.trace[k].alpha == rb.trace[k].alpha);
    CHECK(ra.trace[k].energy == rb.trace[k].energy);
  }
}

TEST_CASE("labeling and energy trace csv files have the promised shape") {
  std::vector<SemanticMap> maps = {make_map({0.85, 0.15}),
                                   make_map({0.15, 0.85})};
  const AffinityGraph graph = graph_of({{0, 1, 0.5f}});
  const InferenceResult result = infer_labels(maps, 2, graph, {});

  const auto dir = std::filesystem::temp_directory_path();
  const auto labels_path = dir / "semtraj_test_labeling.csv";
  const auto trace_path = dir / "semtraj_test_trace.csv";
  save_labeling_csv(labels_path, {7, 9}, result, maps);
  save_energy_trace_csv(trace_path, result.trace);

  std::ifstream labels_in(labels_path);
  std::string line;
  std::getline(labels_in, line);
  CHECK(line == "trajectory_id,argmax_label,final_label,changed,class_1,class_2");
  std::getline(labels_in, line);
  CHECK(line == "7,1,1,0,0.85,0.15");
  std::getline(labels_in, line);
  CHECK(line == "9,2,2,0,0.15,0.85");

  std::ifstream trace_in(trace_path);
  std::getline(trace_in, line);
  CHECK(line == "sweep,alpha,energy");
  std::getline(trace_in, line);
  CHECK(line == "0,0,0.5");

  std::filesystem::remove(labels_path);
  std::filesystem::remove(trace_path);
}

TEST_CASE("inference rejects invalid inputs") {
  std::vector<SemanticMap> maps = {make_map({0.6, 0.4})};
  const AffinityGraph empty_graph{};

  EnergyParams params;
  params.lambda = -1.0;
  CHECK_THROWS_AS(infer_labels(maps, 2, empty_graph, params),
                  std::invalid_argument);
  params.lambda = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(infer_labels(maps, 2, empty_graph, params),
                  std::invalid_argument);
  params = {};
  params.max_sweeps = 0;
  CHECK_THROWS_AS(infer_labels(maps, 2, empty_graph, params),
                  std::invalid_argument);

  // Map length has to match the label count.
  CHECK_THROWS_AS(infer_labels(maps, 3, empty_graph, {}),
                  std::invalid_argument);
  // Edges must stay inside the trajectory range.
  const AffinityGraph bad_graph = graph_of({{0, 5, 0.5f}});
  CHECK_THROWS_AS(infer_labels(maps, 2, bad_graph, {}), std::invalid_argument);
  // Initial labelings are validated for size and range.
  CHECK_THROWS_AS(
      alpha_expansion(maps, 2, empty_graph, {}, Labeling{{1, 2}}, nullptr),
      std::invalid_argument);
  CHECK_THROWS_AS(
      alpha_expansion(maps, 2, empty_graph, {}, Labeling{{0}}, nullptr),
      std::invalid_argument);
  CHECK_THROWS_AS(
      alpha_expansion(maps, 2, empty_graph, {}, Labeling{{3}}, nullptr),
      std::invalid_argument);
  CHECK_THROWS_AS(
      expansion_move(maps, 2, empty_graph, {}, Labeling{{1}}, 0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      expansion_move(maps, 2, empty_graph, {}, Labeling{{1}}, 3),
      std::invalid_argument);
}
