#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphguard/gnn.hpp"
#include "graphguard/graph.hpp"

namespace graphguard {

// Parameters of the radioactive construction: N optimization epochs, k
// gradient-ranked flips per epoch, and the pre-trained surrogate whose
// encoder/loss drive the objective.
struct RadioactiveConfig {
  int max_epochs = 20;
  int flips_per_epoch = 0;  // 0 means "use default_flips_per_epoch"
  GnnModel surrogate;
};

// ceil(0.5% of the feature-matrix entries), the default per-epoch budget.
inline int default_flips_per_epoch(const Graph& g) {
  long long entries = static_cast<long long>(g.node_count) * g.feature_dim();
  return static_cast<int>((entries + 199) / 200);
}

struct FlipRecord {
  int epoch;
  int node;
  int feature;
  double old_value;
  double new_value;
  int gradient_sign;  // sign of dL_opt/dX at the flipped entry
};

struct RadioactiveResult {
  Graph graph;
  std::vector<FlipRecord> flip_ledger;        // actual changes only
  std::vector<double> objective_trace;        // L_opt before each epoch + final
};

// L_opt = ||f^e(G) - f^e(Ĝ)||_F - L(f(Ĝ), Y), where Ĝ is the structure-free
// view of G. Minimizing it pulls the two embeddings together while pushing
// the structure-free loss up.
inline double l_opt(const GnnModel& surrogate, const Graph& g, const std::vector<int>& labels) {
  for (int i = 0; i < g.node_count; ++i)
    if (labels[i] < 0) throw std::invalid_argument("l_opt: every node must carry a label");

  NormalizedAdjacency adj_full(g);
  Graph stripped = strip_structure(g);
  NormalizedAdjacency adj_iso(stripped);

  Matrix emb_full = encode(surrogate, adj_full, g.features);
  ForwardTrace trace_iso = forward(surrogate, adj_iso, g.features);

  std::vector<int> all(g.node_count);
  for (int i = 0; i < g.node_count; ++i) all[i] = i;
  double collision = frobenius_norm(subtract(emb_full, trace_iso.embeddings));
  double evasion = loss(trace_iso, labels, all);
  return collision - evasion;
}

// dL_opt/dX, treating the binary entries as continuous. X feeds both views,
// so the norm term back-propagates through each encoder and the loss term
// through the structure-free forward pass.
inline Matrix l_opt_gradient(const GnnModel& surrogate, const Graph& g,
                             const std::vector<int>& labels) {
  NormalizedAdjacency adj_full(g);
  Graph stripped = strip_structure(g);
  NormalizedAdjacency adj_iso(stripped);

  Matrix emb_full = encode(surrogate, adj_full, g.features);
  Matrix emb_iso = encode(surrogate, adj_iso, g.features);
  Matrix diff = subtract(emb_full, emb_iso);
  double nrm = frobenius_norm(diff);

  Matrix grad(g.node_count, g.feature_dim());
  if (nrm > 0.0) {
    Matrix cot = diff;
    scale_in_place(cot, 1.0 / nrm);
    add_in_place(grad, encoder_feature_vjp(surrogate, adj_full, g.features, cot));
    scale_in_place(cot, -1.0);
    add_in_place(grad, encoder_feature_vjp(surrogate, adj_iso, g.features, cot));
  }

  std::vector<int> all(g.node_count);
  for (int i = 0; i < g.node_count; ++i) all[i] = i;
  Gradients ce = backward(surrogate, adj_iso, g.features, labels, all, true);
  add_in_place(grad, ce.features, -1.0);
  return grad;
}

struct FlipCandidate {
  int node;
  int feature;
  double new_value;
};

// The k entries with the largest |gradient|, ties broken by (node, feature).
// The target value follows the gradient sign: positive -> 0, else -> 1.
// Entries already at their target are still reported; the selection is
// purely gradient-ranked.
inline std::vector<FlipCandidate> select_flips(const Matrix& gradient, const Matrix& features,
                                               int k) {
  check_shape(gradient.same_shape(features), "select_flips: gradient/feature shape mismatch");
  long long entries = static_cast<long long>(gradient.rows) * gradient.cols;
  if (k < 0 || k > entries) throw std::invalid_argument("select_flips: k out of range");

  std::vector<int> order(static_cast<std::size_t>(entries));
  for (long long i = 0; i < entries; ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double ga = std::fabs(gradient.data[a]);
    double gb = std::fabs(gradient.data[b]);
    if (ga != gb) return ga > gb;
    return a < b;  // row-major index order == (node, feature) lexicographic
  });

  std::vector<FlipCandidate> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    int idx = order[i];
    int node = idx / gradient.cols;
    int feature = idx % gradient.cols;
    double target = gradient.data[idx] > 0.0 ? 0.0 : 1.0;
    out.push_back({node, feature, target});
  }
  return out;
}

// Runs the construction loop: one gradient of L_opt per epoch, k flips
// applied, actual changes recorded. Structure, labels, and node count are
// never touched.
inline RadioactiveResult construct_radioactive(const Graph& initial,
                                               const RadioactiveConfig& config) {
  validate_graph(initial);
  for (int i = 0; i < initial.node_count; ++i)
    if (initial.labels.empty() || initial.labels[i] < 0)
      throw std::invalid_argument("construct_radioactive: every node must carry a label");
  if (config.surrogate.in_dim() != initial.feature_dim())
    throw std::invalid_argument("construct_radioactive: surrogate input dim mismatch");
  if (config.surrogate.out_dim() < initial.num_classes)
    throw std::invalid_argument("construct_radioactive: surrogate class count mismatch");
  if (config.max_epochs < 0) throw std::invalid_argument("construct_radioactive: negative epochs");

  int k = config.flips_per_epoch > 0 ? config.flips_per_epoch : default_flips_per_epoch(initial);
  long long entries = static_cast<long long>(initial.node_count) * initial.feature_dim();
  if (k > entries)
    throw std::invalid_argument("construct_radioactive: flips_per_epoch exceeds entry count");

  RadioactiveResult result;
  result.graph = initial;
  result.graph.role = GraphRole::OwnerPrivate;
  result.objective_trace.reserve(config.max_epochs + 1);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    result.objective_trace.push_back(l_opt(config.surrogate, result.graph, result.graph.labels));
    Matrix grad = l_opt_gradient(config.surrogate, result.graph, result.graph.labels);
    for (const FlipCandidate& f : select_flips(grad, result.graph.features, k)) {
      double old = result.graph.features(f.node, f.feature);
      if (old == f.new_value) continue;  // gradient-ranked no-op
      result.graph.features(f.node, f.feature) = f.new_value;
      int sign = grad(f.node, f.feature) > 0.0 ? 1 : (grad(f.node, f.feature) < 0.0 ? -1 : 0);
      result.flip_ledger.push_back({epoch, f.node, f.feature, old, f.new_value, sign});
    }
  }
  result.objective_trace.push_back(l_opt(config.surrogate, result.graph, result.graph.labels));
  return result;
}

inline std::string ledger_to_csv(const RadioactiveResult& result) {
  std::string out = "epoch,node,feature,old,new,grad_sign\n";
  for (const FlipRecord& r : result.flip_ledger) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.node) + ',' +
           std::to_string(r.feature) + ',' + std::to_string(static_cast<int>(r.old_value)) + ',' +
           std::to_string(static_cast<int>(r.new_value)) + ',' + std::to_string(r.gradient_sign) +
           '\n';
  }
  return out;
}

inline void export_ledger_csv(const RadioactiveResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_ledger_csv: cannot open " + path);
  out << ledger_to_csv(result);
  if (!out) throw std::runtime_error("export_ledger_csv: write failed for " + path);
}

}  // namespace graphguard
