#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "graphguard/graph.hpp"
#include "graphguard/rng.hpp"

namespace graphguard {

// The four node-disjoint parts every experiment runs on. owner_graph is the
// protected data, authorized_graph the developer's licensed data, eval_graph
// the held-out non-members, surrogate_graph the public split the owner
// pre-trains on.
struct DatasetBundle {
  Graph owner_graph;
  Graph authorized_graph;
  Graph eval_graph;
  Graph surrogate_graph;
  int num_classes = 0;
  std::uint64_t seed = 0;
  // Cross-part edges are dropped to keep the parts inductive; the count is
  // retained for the split report.
  int dropped_cross_edges = 0;
};

// Planted-partition graph with class-aligned binary feature blocks: node of
// class c turns feature j on with probability `feature_signal` when j lies in
// class c's block, else 1 - feature_signal. Bit-reproducible per seed: the
// draw order is fixed (all features first, then all candidate edges).
inline Graph generate_synthetic(int num_nodes, int num_classes, int feature_dim,
                                double intra_edge_prob, double inter_edge_prob,
                                double feature_signal, std::uint64_t seed) {
  if (num_nodes < 1) throw std::invalid_argument("generate_synthetic: need at least one node");
  if (num_classes < 1) throw std::invalid_argument("generate_synthetic: need at least one class");
  if (num_classes > feature_dim)
    throw std::invalid_argument("generate_synthetic: more classes than features");
  if (!(intra_edge_prob > inter_edge_prob))
    throw std::invalid_argument("generate_synthetic: intra_edge_prob must exceed inter_edge_prob");
  if (!(feature_signal > 0.5) || !(feature_signal < 1.0))
    throw std::invalid_argument("generate_synthetic: feature_signal must lie in (0.5, 1)");

  Rng rng(seed);
  Graph g;
  g.node_count = num_nodes;
  g.num_classes = num_classes;
  g.features = Matrix(num_nodes, feature_dim);
  g.labels.resize(num_nodes);

  int block = feature_dim / num_classes;  // >= 1 by the precondition
  for (int i = 0; i < num_nodes; ++i) {
    int c = i % num_classes;
    g.labels[i] = c;
    int lo = c * block;
    int hi = (c == num_classes - 1) ? feature_dim : lo + block;
    for (int j = 0; j < feature_dim; ++j) {
      double p = (j >= lo && j < hi) ? feature_signal : 1.0 - feature_signal;
      g.features(i, j) = rng.uniform() < p ? 1.0 : 0.0;
    }
  }
  for (int i = 0; i < num_nodes; ++i) {
    for (int j = i + 1; j < num_nodes; ++j) {
      double p = (g.labels[i] == g.labels[j]) ? intra_edge_prob : inter_edge_prob;
      if (rng.uniform() < p) g.edges.push_back({i, j});
    }
  }
  return g;
}

namespace detail {

// Induced subgraph over `nodes` (given in ascending original order),
// re-indexed 0..m-1.
inline Graph induced_subgraph(const Graph& g, const std::vector<int>& nodes, GraphRole role) {
  std::vector<int> pos(g.node_count, -1);
  for (int k = 0; k < static_cast<int>(nodes.size()); ++k) pos[nodes[k]] = k;

  Graph out;
  out.node_count = static_cast<int>(nodes.size());
  out.num_classes = g.num_classes;
  out.role = role;
  out.features = Matrix(out.node_count, g.feature_dim());
  out.labels.assign(out.node_count, -1);
  for (int k = 0; k < out.node_count; ++k) {
    for (int j = 0; j < g.feature_dim(); ++j) out.features(k, j) = g.features(nodes[k], j);
    if (!g.labels.empty()) out.labels[k] = g.labels[nodes[k]];
  }
  for (auto [i, j] : g.edges) {
    if (pos[i] >= 0 && pos[j] >= 0) out.edges.push_back({pos[i], pos[j]});
  }
  canonicalize_edges(out.edges);
  return out;
}

}  // namespace detail

// Node-disjoint inductive split into owner / authorized / eval / surrogate
// parts. Cross-part edges are dropped silently but counted.
inline DatasetBundle split_inductive(const Graph& g, std::array<double, 4> fractions,
                                     std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split_inductive: fractions must be positive");
    sum += f;
  }
  if (sum > 1.0 + 1e-12) throw std::invalid_argument("split_inductive: fractions sum above 1");

  std::vector<int> order(g.node_count);
  for (int i = 0; i < g.node_count; ++i) order[i] = i;
  Rng rng(Rng::derive_seed(seed, "split"));
  for (int i = g.node_count - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[i], order[j]);
  }

  std::array<std::vector<int>, 4> parts;
  int cursor = 0;
  for (int p = 0; p < 4; ++p) {
    int size = static_cast<int>(fractions[p] * g.node_count);
    if (size < 1) throw std::invalid_argument("split_inductive: a part would receive 0 nodes");
    for (int k = 0; k < size; ++k) parts[p].push_back(order[cursor++]);
    std::sort(parts[p].begin(), parts[p].end());
  }

  DatasetBundle bundle;
  bundle.owner_graph = detail::induced_subgraph(g, parts[0], GraphRole::OwnerPrivate);
  bundle.authorized_graph = detail::induced_subgraph(g, parts[1], GraphRole::Authorized);
  bundle.eval_graph = detail::induced_subgraph(g, parts[2], GraphRole::Eval);
  bundle.surrogate_graph = detail::induced_subgraph(g, parts[3], GraphRole::Public);
  bundle.num_classes = g.num_classes;
  bundle.seed = seed;
  int kept = static_cast<int>(bundle.owner_graph.edges.size() + bundle.authorized_graph.edges.size() +
                              bundle.eval_graph.edges.size() + bundle.surrogate_graph.edges.size());
  bundle.dropped_cross_edges = static_cast<int>(g.edges.size()) - kept;
  return bundle;
}

}  // namespace graphguard
