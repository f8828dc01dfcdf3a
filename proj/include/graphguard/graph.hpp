#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "graphguard/matrix.hpp"

namespace graphguard {

// Which hat a graph is wearing in the pipeline. Public/owner/developer data
// all share one carrier type; the role tag keeps hand-offs auditable.
enum class GraphRole {
  OwnerPrivate,     // owner's graph, edges confidential
  OwnerQuery,       // structure-free query view (edge set must be empty)
  Authorized,       // developer's licensed training graph
  Misused,          // authorized + owner union used for illicit training
  SyntheticUnlearn, // server-synthesized stand-in for the owner nodes
  SyntheticRemain,  // server-synthesized stand-in for the authorized nodes
  Eval,             // held-out non-member nodes
  Public,           // public split used to pre-train the surrogate
};

inline const char* role_name(GraphRole r) {
  switch (r) {
    case GraphRole::OwnerPrivate: return "owner_private";
    case GraphRole::OwnerQuery: return "owner_query";
    case GraphRole::Authorized: return "authorized";
    case GraphRole::Misused: return "misused";
    case GraphRole::SyntheticUnlearn: return "synthetic_unlearn";
    case GraphRole::SyntheticRemain: return "synthetic_remain";
    case GraphRole::Eval: return "eval";
    case GraphRole::Public: return "public";
  }
  return "?";
}

// Undirected simple graph with binary node features and optional labels.
// Edges are stored once as (i, j) with i < j, sorted; self-loops are never
// stored (they enter only through normalization). Label -1 means unlabeled.
struct Graph {
  int node_count = 0;
  int num_classes = 0;
  std::vector<std::pair<int, int>> edges;  // canonical: i < j, sorted, unique
  Matrix features;                         // node_count x feature_dim, entries in {0,1}
  std::vector<int> labels;                 // node_count entries, -1 = unlabeled
  GraphRole role = GraphRole::OwnerPrivate;

  int feature_dim() const { return features.cols; }

  bool has_labels() const {
    for (int y : labels)
      if (y >= 0) return true;
    return false;
  }

  std::vector<int> labeled_nodes() const {
    std::vector<int> idx;
    for (int i = 0; i < node_count; ++i)
      if (i < static_cast<int>(labels.size()) && labels[i] >= 0) idx.push_back(i);
    return idx;
  }
};

// Brings an edge list to the canonical form: undirected (i<j), sorted,
// duplicates collapsed. Self-loops are the caller's error.
inline void canonicalize_edges(std::vector<std::pair<int, int>>& edges) {
  for (auto& e : edges) {
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

inline void validate_graph(const Graph& g) {
  if (g.node_count < 0) throw std::invalid_argument("graph: negative node count");
  if (g.features.rows != g.node_count)
    throw std::invalid_argument("graph: feature row count != node count");
  if (!g.labels.empty() && static_cast<int>(g.labels.size()) != g.node_count)
    throw std::invalid_argument("graph: label count != node count");
  for (double v : g.features.data)
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("graph: non-binary feature entry");
  for (auto [i, j] : g.edges) {
    if (i == j) throw std::invalid_argument("graph: self-loop in edge set");
    if (i < 0 || j < 0 || i >= g.node_count || j >= g.node_count)
      throw std::invalid_argument("graph: edge endpoint out of range");
  }
  for (int y : g.labels)
    if (y >= g.num_classes) throw std::invalid_argument("graph: label out of class range");
  if (g.role == GraphRole::OwnerQuery && !g.edges.empty())
    throw std::invalid_argument("graph: query role requires an empty edge set");
}

// Symmetrically normalized adjacency with implicit self-loops:
//   N = D^{-1/2} (A + I) D^{-1/2},  D_ii = 1 + degree(i).
// Dense below `kSparseThreshold` nodes, CSR above. Both paths expose the
// same products, so callers never branch.
class NormalizedAdjacency {
 public:
  static constexpr int kSparseThreshold = 5000;

  NormalizedAdjacency() = default;

  explicit NormalizedAdjacency(const Graph& g) : n_(g.node_count) {
    if (n_ < 1) throw std::invalid_argument("normalize_adjacency: empty graph");
    degrees_.assign(n_, 1.0);  // self-loop contributes 1
    for (auto [i, j] : g.edges) {
      degrees_[i] += 1.0;
      degrees_[j] += 1.0;
    }
    sparse_ = n_ > kSparseThreshold;
    if (sparse_) {
      build_csr(g);
    } else {
      dense_ = Matrix(n_, n_);
      for (int i = 0; i < n_; ++i) dense_(i, i) = 1.0 / degrees_[i];
      for (auto [i, j] : g.edges) {
        double v = 1.0 / std::sqrt(degrees_[i] * degrees_[j]);
        dense_(i, j) = v;
        dense_(j, i) = v;
      }
    }
  }

  int node_count() const { return n_; }
  bool is_sparse() const { return sparse_; }
  const std::vector<double>& tilde_degrees() const { return degrees_; }

  double entry(int i, int j) const {
    if (!sparse_) return dense_(i, j);
    for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
      if (col_idx_[p] == j) return values_[p];
    return 0.0;
  }

  // N * X.
  Matrix apply(const Matrix& x) const {
    check_shape(x.rows == n_, "NormalizedAdjacency::apply: row mismatch");
    if (!sparse_) return matmul(dense_, x);
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < n_; ++i) {
      double* orow = out.row(i);
      for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        double v = values_[p];
        const double* xrow = x.row(col_idx_[p]);
        for (int j = 0; j < x.cols; ++j) orow[j] += v * xrow[j];
      }
    }
    return out;
  }

  // N^T * X; N is symmetric so this is apply(), kept for call-site clarity.
  Matrix apply_transposed(const Matrix& x) const { return apply(x); }

 private:
  void build_csr(const Graph& g) {
    std::vector<std::vector<std::pair<int, double>>> rows(n_);
    for (int i = 0; i < n_; ++i) rows[i].push_back({i, 1.0 / degrees_[i]});
    for (auto [i, j] : g.edges) {
      double v = 1.0 / std::sqrt(degrees_[i] * degrees_[j]);
      rows[i].push_back({j, v});
      rows[j].push_back({i, v});
    }
    row_ptr_.assign(n_ + 1, 0);
    for (int i = 0; i < n_; ++i) {
      std::sort(rows[i].begin(), rows[i].end());
      row_ptr_[i + 1] = row_ptr_[i] + static_cast<int>(rows[i].size());
    }
    col_idx_.reserve(row_ptr_[n_]);
    values_.reserve(row_ptr_[n_]);
    for (int i = 0; i < n_; ++i)
      for (auto [c, v] : rows[i]) {
        col_idx_.push_back(c);
        values_.push_back(v);
      }
  }

  int n_ = 0;
  bool sparse_ = false;
  std::vector<double> degrees_;
  Matrix dense_;
  std::vector<int> row_ptr_;
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

inline NormalizedAdjacency normalize_adjacency(const Graph& g) {
  return NormalizedAdjacency(g);
}

// Drops every edge, keeping features and labels. This is the only view of an
// owner graph that may leave the owner's hands.
inline Graph strip_structure(const Graph& g) {
  Graph out = g;
  out.edges.clear();
  out.role = GraphRole::OwnerQuery;
  return out;
}

// Disjoint union: authorized nodes keep their indices, owner nodes are
// re-indexed after them. No cross-part edges are invented.
inline Graph merge_graphs(const Graph& authorized, const Graph& owner) {
  if (authorized.feature_dim() != owner.feature_dim() && authorized.node_count > 0 &&
      owner.node_count > 0)
    throw std::invalid_argument("merge_graphs: feature dimensions differ");
  if (authorized.num_classes != owner.num_classes && authorized.node_count > 0 &&
      owner.node_count > 0)
    throw std::invalid_argument("merge_graphs: class counts differ");

  Graph out;
  out.node_count = authorized.node_count + owner.node_count;
  out.num_classes = std::max(authorized.num_classes, owner.num_classes);
  int d = authorized.node_count > 0 ? authorized.feature_dim() : owner.feature_dim();
  out.features = Matrix(out.node_count, d);
  out.labels.assign(out.node_count, -1);
  out.role = GraphRole::Misused;

  for (int i = 0; i < authorized.node_count; ++i) {
    for (int j = 0; j < d; ++j) out.features(i, j) = authorized.features(i, j);
    if (i < static_cast<int>(authorized.labels.size())) out.labels[i] = authorized.labels[i];
  }
  int off = authorized.node_count;
  for (int i = 0; i < owner.node_count; ++i) {
    for (int j = 0; j < d; ++j) out.features(off + i, j) = owner.features(i, j);
    if (i < static_cast<int>(owner.labels.size())) out.labels[off + i] = owner.labels[i];
  }
  out.edges = authorized.edges;
  for (auto [i, j] : owner.edges) out.edges.push_back({i + off, j + off});
  canonicalize_edges(out.edges);
  return out;
}

// Jaccard similarity of two binary feature rows. Two all-zero rows are
// identical, so their similarity is 1.
inline double feature_jaccard(const Matrix& features, int a, int b) {
  const double* ra = features.row(a);
  const double* rb = features.row(b);
  int inter = 0, uni = 0;
  for (int j = 0; j < features.cols; ++j) {
    bool x = ra[j] != 0.0, y = rb[j] != 0.0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace graphguard
