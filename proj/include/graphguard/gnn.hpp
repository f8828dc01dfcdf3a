#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphguard/graph.hpp"
#include "graphguard/matrix.hpp"
#include "graphguard/rng.hpp"

namespace graphguard {

enum class GnnArch { GcnTwoLayer, MeanAggTwoLayer };
enum class Optimizer { Adam, Sgd };

inline const char* arch_name(GnnArch a) {
  return a == GnnArch::GcnTwoLayer ? "gcn2" : "meanagg2";
}

inline GnnArch arch_from_name(const std::string& s) {
  if (s == "gcn2") return GnnArch::GcnTwoLayer;
  if (s == "meanagg2") return GnnArch::MeanAggTwoLayer;
  throw std::invalid_argument("unknown architecture tag '" + s + "'");
}

// Two-layer GNN: probs = softmax(P · ReLU(P · X · W0) · W1), where P is the
// symmetrically normalized adjacency (GcnTwoLayer) or the row-normalized
// adjacency (MeanAggTwoLayer). The encoder f^e is the ReLU layer output; the
// classifier f^c is the rest, so f = f^c ∘ f^e holds exactly.
struct GnnModel {
  GnnArch arch = GnnArch::GcnTwoLayer;
  Matrix w0;  // in_dim x hidden
  Matrix w1;  // hidden x out_dim
  int hidden_dim = 16;

  int in_dim() const { return w0.rows; }
  int out_dim() const { return w1.cols; }
};

struct TrainConfig {
  GnnArch arch = GnnArch::GcnTwoLayer;
  int hidden_dim = 16;
  double learning_rate = 0.01;
  int epochs = 300;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

struct ForwardTrace {
  Matrix embeddings;     // node x hidden, post-ReLU (f^e output)
  Matrix logits;         // node x classes
  Matrix probabilities;  // softmax rows
  // Intermediates kept so backward passes need not recompute them.
  Matrix propagated_input;  // P · X
  Matrix pre_activation;    // P · X · W0
};

// Applies the architecture's propagation operator. Row normalization is the
// symmetric operator conjugated by D^{1/2}, so one stored matrix serves both.
class Propagator {
 public:
  Propagator(const NormalizedAdjacency& adj, GnnArch arch) : adj_(&adj), arch_(arch) {}

  int node_count() const { return adj_->node_count(); }

  Matrix apply(const Matrix& x) const {
    if (arch_ == GnnArch::GcnTwoLayer) return adj_->apply(x);
    Matrix scaled = scale_rows(x, +0.5);
    Matrix out = adj_->apply(scaled);
    return scale_rows_in_place(std::move(out), -0.5);
  }

  Matrix apply_transposed(const Matrix& x) const {
    if (arch_ == GnnArch::GcnTwoLayer) return adj_->apply_transposed(x);
    Matrix scaled = scale_rows(x, -0.5);
    Matrix out = adj_->apply_transposed(scaled);
    return scale_rows_in_place(std::move(out), +0.5);
  }

 private:
  Matrix scale_rows(const Matrix& x, double exponent) const {
    Matrix out = x;
    return scale_rows_in_place(std::move(out), exponent);
  }
  Matrix scale_rows_in_place(Matrix&& x, double exponent) const {
    const auto& deg = adj_->tilde_degrees();
    for (int i = 0; i < x.rows; ++i) {
      double s = std::pow(deg[i], exponent);
      double* row = x.row(i);
      for (int j = 0; j < x.cols; ++j) row[j] *= s;
    }
    return std::move(x);
  }

  const NormalizedAdjacency* adj_;
  GnnArch arch_;
};

namespace gnn_detail {

inline void softmax_rows(const Matrix& logits, Matrix& probs) {
  probs = Matrix(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    const double* lrow = logits.row(i);
    double* prow = probs.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < logits.cols; ++j) mx = std::max(mx, lrow[j]);
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) {
      prow[j] = std::exp(lrow[j] - mx);
      sum += prow[j];
    }
    for (int j = 0; j < logits.cols; ++j) prow[j] /= sum;
  }
}

inline Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// ReLU subgradient at 0 is 0, fixed for reproducible gradients.
inline void mask_relu_backward(Matrix& grad, const Matrix& pre_activation) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(pre_activation.data[i] > 0.0)) grad.data[i] = 0.0;
}

template <typename Prop>
ForwardTrace forward_impl(const GnnModel& model, const Prop& prop, const Matrix& features) {
  check_shape(features.cols == model.w0.rows, "forward: feature dim does not match W0");
  check_shape(model.w0.cols == model.w1.rows, "forward: W0/W1 dims disagree");
  ForwardTrace t;
  t.propagated_input = prop.apply(features);
  t.pre_activation = matmul(t.propagated_input, model.w0);
  t.embeddings = relu(t.pre_activation);
  t.logits = matmul(prop.apply(t.embeddings), model.w1);
  softmax_rows(t.logits, t.probabilities);
  return t;
}

// Adapter so the dense-matrix propagation (used when gradients must flow
// through the adjacency itself) shares the forward/backward code.
struct DensePropagator {
  const Matrix* p;
  Matrix apply(const Matrix& x) const { return matmul(*p, x); }
  Matrix apply_transposed(const Matrix& x) const { return matmul_at_b(*p, x); }
};

}  // namespace gnn_detail

inline ForwardTrace forward(const GnnModel& model, const NormalizedAdjacency& adj,
                            const Matrix& features) {
  check_shape(adj.node_count() == features.rows, "forward: adjacency/feature row mismatch");
  Propagator prop(adj, model.arch);
  return gnn_detail::forward_impl(model, prop, features);
}

// Forward through an explicit dense propagation matrix (already normalized).
inline ForwardTrace forward_dense(const GnnModel& model, const Matrix& propagation,
                                  const Matrix& features) {
  check_shape(propagation.rows == propagation.cols, "forward_dense: propagation must be square");
  check_shape(propagation.rows == features.rows, "forward_dense: propagation/feature mismatch");
  gnn_detail::DensePropagator prop{&propagation};
  return gnn_detail::forward_impl(model, prop, features);
}

inline Matrix encode(const GnnModel& model, const NormalizedAdjacency& adj,
                     const Matrix& features) {
  return forward(model, adj, features).embeddings;
}

constexpr double kProbClamp = 1e-12;

// Mean cross-entropy over the masked nodes. Probabilities are clamped at
// 1e-12 so an overconfident model can never produce a NaN loss.
inline double loss(const ForwardTrace& trace, const std::vector<int>& labels,
                   const std::vector<int>& mask) {
  if (mask.empty()) throw std::invalid_argument("loss: mask selects no nodes");
  double total = 0.0;
  for (int i : mask) {
    int y = labels[i];
    if (y < 0 || y >= trace.probabilities.cols)
      throw std::invalid_argument("loss: masked node has no valid label");
    total += -std::log(std::max(trace.probabilities(i, y), kProbClamp));
  }
  return total / static_cast<double>(mask.size());
}

struct Gradients {
  Matrix w0;
  Matrix w1;
  Matrix features;  // empty unless requested
};

namespace gnn_detail {

// Cross-entropy logit cotangent: (softmax - onehot) / |mask| on masked rows.
inline Matrix ce_logit_cotangent(const Matrix& probabilities, const std::vector<int>& labels,
                                 const std::vector<int>& mask) {
  Matrix g(probabilities.rows, probabilities.cols);
  double inv = 1.0 / static_cast<double>(mask.size());
  for (int i : mask) {
    const double* prow = probabilities.row(i);
    double* grow = g.row(i);
    for (int j = 0; j < probabilities.cols; ++j) grow[j] = prow[j] * inv;
    grow[labels[i]] -= inv;
  }
  return g;
}

template <typename Prop>
Gradients backward_impl(const GnnModel& model, const Prop& prop, const ForwardTrace& trace,
                        const Matrix& logit_cot, bool want_feature_grad) {
  Gradients g;
  Matrix z1 = prop.apply(trace.embeddings);
  g.w1 = matmul_at_b(z1, logit_cot);
  Matrix dembed = matmul_a_bt(prop.apply_transposed(logit_cot), model.w1);
  mask_relu_backward(dembed, trace.pre_activation);
  g.w0 = matmul_at_b(trace.propagated_input, dembed);
  if (want_feature_grad) {
    Matrix dz0 = matmul_a_bt(dembed, model.w0);
    g.features = prop.apply_transposed(dz0);
  }
  return g;
}

}  // namespace gnn_detail

// Exact analytic gradients of the masked cross-entropy w.r.t. W0, W1 and,
// when requested, the input features.
inline Gradients backward(const GnnModel& model, const NormalizedAdjacency& adj,
                          const Matrix& features, const std::vector<int>& labels,
                          const std::vector<int>& mask, bool want_feature_grad = true) {
  Propagator prop(adj, model.arch);
  ForwardTrace trace = gnn_detail::forward_impl(model, prop, features);
  Matrix cot = gnn_detail::ce_logit_cotangent(trace.probabilities, labels, mask);
  return gnn_detail::backward_impl(model, prop, trace, cot, want_feature_grad);
}

// Feature gradient of an arbitrary scalar through the encoder only:
// given the cotangent dScalar/dEmbeddings, returns dScalar/dFeatures.
inline Matrix encoder_feature_vjp(const GnnModel& model, const NormalizedAdjacency& adj,
                                  const Matrix& features, const Matrix& embedding_cot) {
  Propagator prop(adj, model.arch);
  Matrix propagated = prop.apply(features);
  Matrix pre = matmul(propagated, model.w0);
  Matrix d = embedding_cot;
  gnn_detail::mask_relu_backward(d, pre);
  Matrix dz0 = matmul_a_bt(d, model.w0);
  return prop.apply_transposed(dz0);
}

// Gradient of a scalar w.r.t. a dense propagation matrix P, given the logit
// cotangent. Both layers touch P:
//   logits = P · H · W1   contributes  G · (H W1)^T
//   Hpre   = P · X · W0   contributes  dHpre · (X W0)^T
inline Matrix propagation_gradient(const GnnModel& model, const Matrix& propagation,
                                   const Matrix& features, const ForwardTrace& trace,
                                   const Matrix& logit_cot) {
  Matrix u = matmul(trace.embeddings, model.w1);  // n x c
  Matrix dp = matmul_a_bt(logit_cot, u);
  Matrix dembed = matmul_a_bt(matmul_at_b(propagation, logit_cot), model.w1);
  gnn_detail::mask_relu_backward(dembed, trace.pre_activation);
  Matrix v = matmul(features, model.w0);  // n x h
  Matrix dp1 = matmul_a_bt(dembed, v);
  add_in_place(dp, dp1);
  return dp;
}

struct AdamState {
  Matrix m0, v0, m1, v1;
  int t = 0;

  explicit AdamState(const GnnModel& model)
      : m0(model.w0.rows, model.w0.cols),
        v0(model.w0.rows, model.w0.cols),
        m1(model.w1.rows, model.w1.cols),
        v1(model.w1.rows, model.w1.cols) {}
};

namespace gnn_detail {

inline void adam_update(Matrix& w, Matrix& m, Matrix& v, const Matrix& grad, double lr,
                        double b1, double b2, double eps, int t) {
  double c1 = 1.0 - std::pow(b1, t);
  double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    double g = grad.data[i];
    m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
    v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
    double mhat = m.data[i] / c1;
    double vhat = v.data[i] / c2;
    w.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace gnn_detail

inline void optimizer_step(GnnModel& model, AdamState& state, const Gradients& grads,
                           const TrainConfig& cfg) {
  if (cfg.optimizer == Optimizer::Adam) {
    ++state.t;
    gnn_detail::adam_update(model.w0, state.m0, state.v0, grads.w0, cfg.learning_rate, cfg.beta1,
                            cfg.beta2, cfg.adam_eps, state.t);
    gnn_detail::adam_update(model.w1, state.m1, state.v1, grads.w1, cfg.learning_rate, cfg.beta1,
                            cfg.beta2, cfg.adam_eps, state.t);
  } else {
    add_in_place(model.w0, grads.w0, -cfg.learning_rate);
    add_in_place(model.w1, grads.w1, -cfg.learning_rate);
  }
}

inline Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  Matrix w(rows, cols);
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : w.data) v = rng.uniform(-limit, limit);
  return w;
}

inline GnnModel init_model(GnnArch arch, int in_dim, int hidden_dim, int out_dim,
                           std::uint64_t seed) {
  Rng rng(Rng::derive_seed(seed, "glorot"));
  GnnModel model;
  model.arch = arch;
  model.hidden_dim = hidden_dim;
  model.w0 = glorot_uniform(in_dim, hidden_dim, rng);
  model.w1 = glorot_uniform(hidden_dim, out_dim, rng);
  return model;
}

struct TrainResult {
  GnnModel model;
  std::vector<double> loss_curve;  // pre-step loss, one entry per epoch
};

namespace gnn_detail {

// One full-batch epoch: forward, loss, weight gradients, optimizer step.
// train() and the unlearning fine-tuner both call this, so an alpha=0
// fine-tune is bit-identical to plain training from the same weights.
inline double ce_epoch(GnnModel& model, AdamState& state, const NormalizedAdjacency& adj,
                       const Matrix& features, const std::vector<int>& labels,
                       const std::vector<int>& mask, const TrainConfig& cfg) {
  Propagator prop(adj, model.arch);
  ForwardTrace trace = forward_impl(model, prop, features);
  double l = loss(trace, labels, mask);
  Matrix cot = ce_logit_cotangent(trace.probabilities, labels, mask);
  Gradients grads = backward_impl(model, prop, trace, cot, false);
  optimizer_step(model, state, grads, cfg);
  return l;
}

}  // namespace gnn_detail

// Continues full-batch training from the given weights.
inline TrainResult train_from(GnnModel model, const Graph& g, const TrainConfig& cfg) {
  std::vector<int> mask = g.labeled_nodes();
  if (mask.empty()) throw std::invalid_argument("train: graph has no labeled node");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");

  NormalizedAdjacency adj(g);
  AdamState state(model);
  TrainResult result;
  result.loss_curve.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double l = gnn_detail::ce_epoch(model, state, adj, g.features, g.labels, mask, cfg);
    if (!std::isfinite(l))
      throw std::runtime_error("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch));
    result.loss_curve.push_back(l);
  }
  if (!model.w0.all_finite() || !model.w1.all_finite())
    throw std::runtime_error("training diverged: non-finite weights after final epoch");
  result.model = std::move(model);
  return result;
}

inline TrainResult train(const Graph& g, const TrainConfig& cfg) {
  GnnModel model = init_model(cfg.arch, g.feature_dim(), cfg.hidden_dim, g.num_classes, cfg.seed);
  return train_from(std::move(model), g, cfg);
}

struct Prediction {
  std::vector<int> labels;
  Matrix probabilities;
};

// Row-argmax labels; ties break toward the lowest class index.
inline Prediction predict(const GnnModel& model, const NormalizedAdjacency& adj,
                          const Matrix& features) {
  ForwardTrace trace = forward(model, adj, features);
  Prediction out;
  out.labels.resize(trace.probabilities.rows);
  for (int i = 0; i < trace.probabilities.rows; ++i) {
    const double* prow = trace.probabilities.row(i);
    int best = 0;
    for (int j = 1; j < trace.probabilities.cols; ++j)
      if (prow[j] > prow[best]) best = j;
    out.labels[i] = best;
  }
  out.probabilities = std::move(trace.probabilities);
  return out;
}

// Fraction of labeled nodes the model classifies correctly, using the
// graph's own structure.
inline double accuracy(const GnnModel& model, const Graph& g) {
  NormalizedAdjacency adj(g);
  Prediction pred = predict(model, adj, g.features);
  int correct = 0, total = 0;
  for (int i = 0; i < g.node_count; ++i) {
    if (g.labels[i] < 0) continue;
    ++total;
    if (pred.labels[i] == g.labels[i]) ++correct;
  }
  if (total == 0) throw std::invalid_argument("accuracy: no labeled nodes");
  return static_cast<double>(correct) / static_cast<double>(total);
}

// --- model file format -----------------------------------------------------
// Header `arch=<tag> in=<d> hidden=<h> out=<c>`, then W0 rows, then W1 rows,
// written with the shortest decimal text that parses back to the same double.

namespace gnn_detail {

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline void write_matrix_rows(std::ostringstream& out, const Matrix& m) {
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (j) out << ' ';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline double parse_double_token(const std::string& tok, int lineno) {
  double v;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw std::runtime_error("model file line " + std::to_string(lineno) +
                             ": malformed number '" + tok + "'");
  return v;
}

}  // namespace gnn_detail

inline std::string serialize_model(const GnnModel& model) {
  std::ostringstream out;
  out << "arch=" << arch_name(model.arch) << " in=" << model.in_dim()
      << " hidden=" << model.hidden_dim << " out=" << model.out_dim() << '\n';
  gnn_detail::write_matrix_rows(out, model.w0);
  gnn_detail::write_matrix_rows(out, model.w1);
  return out.str();
}

inline GnnModel parse_model(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("model file: missing header");
  GnnModel model;
  int d = -1, h = -1, c = -1;
  {
    std::istringstream hs(line);
    std::string tok;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("model file: malformed header token '" + tok + "'");
      std::string key = tok.substr(0, eq);
      std::string val = tok.substr(eq + 1);
      if (key == "arch")
        model.arch = arch_from_name(val);
      else if (key == "in")
        d = std::stoi(val);
      else if (key == "hidden")
        h = std::stoi(val);
      else if (key == "out")
        c = std::stoi(val);
      else
        throw std::runtime_error("model file: unknown header key '" + key + "'");
    }
  }
  if (d < 1 || h < 1 || c < 1) throw std::runtime_error("model file: incomplete header");
  model.hidden_dim = h;
  model.w0 = Matrix(d, h);
  model.w1 = Matrix(h, c);
  int lineno = 1;
  auto read_rows = [&](Matrix& m) {
    for (int i = 0; i < m.rows; ++i) {
      if (!std::getline(in, line))
        throw std::runtime_error("model file: truncated at line " + std::to_string(lineno + 1));
      ++lineno;
      std::istringstream rs(line);
      std::string tok;
      for (int j = 0; j < m.cols; ++j) {
        if (!(rs >> tok))
          throw std::runtime_error("model file line " + std::to_string(lineno) +
                                   ": expected " + std::to_string(m.cols) + " values");
        m(i, j) = gnn_detail::parse_double_token(tok, lineno);
      }
      if (rs >> tok)
        throw std::runtime_error("model file line " + std::to_string(lineno) +
                                 ": too many values");
    }
  };
  read_rows(model.w0);
  read_rows(model.w1);
  return model;
}

inline void save_model(const GnnModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << serialize_model(model);
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

inline GnnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace graphguard
