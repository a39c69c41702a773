#include "semtraj/maxflow.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace semtraj {

MaxFlow::MaxFlow(std::size_t node_count) : adjacency_(node_count) {}

void MaxFlow::add_edge(std::uint32_t from, std::uint32_t to, double forward,
                       double backward) {
  if (from >= adjacency_.size() || to >= adjacency_.size()) {
    throw std::out_of_range("max-flow edge endpoint out of range");
  }
  if (!std::isfinite(forward) || !std::isfinite(backward) || forward < 0.0 ||
      backward < 0.0) {
    throw std::invalid_argument("max-flow capacities must be finite and >= 0");
  }
  if (solved_) {
    throw std::logic_error("max-flow graph is frozen after solve");
  }
  adjacency_[from].push_back(static_cast<std::uint32_t>(edges_.size()));
  edges_.push_back({to, forward, forward});
  adjacency_[to].push_back(static_cast<std::uint32_t>(edges_.size()));
  edges_.push_back({from, backward, backward});
}

bool MaxFlow::bfs_levels() {
  std::fill(level_.begin(), level_.end(), -1);
  std::deque<std::uint32_t> queue;
  level_[source_] = 0;
  queue.push_back(source_);
  while (!queue.empty()) {
    const std::uint32_t u = queue.front();
    queue.pop_front();
    for (std::uint32_t k : adjacency_[u]) {
      const Edge& e = edges_[k];
      if (e.residual > kEps && level_[e.to] < 0) {
        level_[e.to] = level_[u] + 1;
        queue.push_back(e.to);
      }
    }
  }
  return level_[sink_] >= 0;
}

double MaxFlow::push(std::uint32_t node, double limit) {
  if (node == sink_) return limit;
  for (std::uint32_t& c = cursor_[node]; c < adjacency_[node].size(); ++c) {
    const std::uint32_t k = adjacency_[node][c];
    Edge& e = edges_[k];
    if (e.residual <= kEps || level_[e.to] != level_[node] + 1) continue;
    const double sent = push(e.to, std::min(limit, e.residual));
    if (sent > 0.0) {
      e.residual -= sent;
      edges_[k ^ 1].residual += sent;
      return sent;
    }
  }
  return 0.0;
}

double MaxFlow::solve(std::uint32_t source, std::uint32_t sink) {
  if (solved_) {
    throw std::logic_error("max-flow instance already solved");
  }
  if (source >= adjacency_.size() || sink >= adjacency_.size() ||
      source == sink) {
    throw std::invalid_argument("max-flow terminals invalid");
  }
  source_ = source;
  sink_ = sink;
  level_.assign(adjacency_.size(), -1);
  cursor_.assign(adjacency_.size(), 0);
  while (bfs_levels()) {
    std::fill(cursor_.begin(), cursor_.end(), 0);
    for (;;) {
      const double sent =
          push(source_, std::numeric_limits<double>::infinity());
      if (sent <= 0.0) break;
      flow_ += sent;
    }
  }
  solved_ = true;
  // The final BFS failed to reach the sink, so level_ now marks exactly the
  // residually reachable nodes: the source side of the minimum cut.
  assert(flow_conservation_gap() <= 1e-9 * std::max(1.0, flow_));
  return flow_;
}

bool MaxFlow::source_side(std::uint32_t node) const {
  if (!solved_) {
    throw std::logic_error("max-flow cut queried before solve");
  }
  if (node >= adjacency_.size()) {
    throw std::out_of_range("max-flow node out of range");
  }
  return level_[node] >= 0;
}

double MaxFlow::cut_capacity() const {
  if (!solved_) {
    throw std::logic_error("max-flow cut queried before solve");
  }
  double total = 0.0;
  for (std::uint32_t u = 0; u < adjacency_.size(); ++u) {
    if (level_[u] < 0) continue;
    for (std::uint32_t k : adjacency_[u]) {
      const Edge& e = edges_[k];
      if (level_[e.to] < 0) total += e.capacity;
    }
  }
  return total;
}

double MaxFlow::flow_conservation_gap() const {
  std::vector<double> net(adjacency_.size(), 0.0);
  for (std::uint32_t u = 0; u < adjacency_.size(); ++u) {
    for (std::uint32_t k : adjacency_[u]) {
      // Signed flow on this direction; the paired reverse edge carries the
      // opposite sign from its own endpoint's sum.
      net[u] += edges_[k].capacity - edges_[k].residual;
    }
  }
  double gap = std::abs(net[source_] - flow_);
  gap = std::max(gap, std::abs(net[sink_] + flow_));
  for (std::uint32_t u = 0; u < adjacency_.size(); ++u) {
    if (u == source_ || u == sink_) continue;
    gap = std::max(gap, std::abs(net[u]));
  }
  return gap;
}

}  // namespace semtraj
