#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "graphguard/dataset.hpp"
#include "graphguard/gnn.hpp"
#include "graphguard/graph.hpp"

namespace graphguard {

// Single-hidden-layer graph generator encoder: e_i = ReLU(x_i W + b). Two
// nodes are connected when their embeddings lie within edge_threshold; during
// training the hard rule is relaxed to sigmoid((eps - dist) / tau).
struct GeneratorModel {
  Matrix w;               // feature_dim x embed_dim
  std::vector<double> b;  // embed_dim
  double edge_threshold = 0.0;  // eps_u, fixed before training
  double soft_temperature = 0.0;

  Matrix encode(const Matrix& attributes) const {
    Matrix pre = matmul(attributes, w);
    for (int i = 0; i < pre.rows; ++i) {
      double* row = pre.row(i);
      for (int j = 0; j < pre.cols; ++j) {
        row[j] += b[j];
        if (row[j] < 0.0) row[j] = 0.0;
      }
    }
    return pre;
  }
};

struct UnlearnConfig {
  double alpha = 0.5;
  int finetune_epochs = 50;
  double finetune_lr = 0.01;
  std::optional<double> ascent_loss_cap;  // empty = 2 * ln(num_classes)
  int generator_epochs = 100;
  double generator_lr = 0.01;
  int embed_dim = 16;
  double tau_factor = 0.25;          // soft_temperature = tau_factor * eps_u
  double epsilon_percentile = 30.0;  // eps_u percentile of initial distances
  std::uint64_t seed = 0;
};

struct UnlearnReport {
  double pre_mia_accuracy = 0.0;
  double post_mia_accuracy = 0.0;
  double accuracy_retrain = 0.0;
  double accuracy_unlearned = 0.0;
  double delta_accuracy = 0.0;
  double time_retrain_s = 0.0;
  double time_unlearn_s = 0.0;
};

namespace unlearn_detail {

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix pairwise_distances(const Matrix& embeddings) {
  int n = embeddings.rows;
  Matrix d(n, n);
  for (int i = 0; i < n; ++i) {
    const double* ei = embeddings.row(i);
    for (int j = i + 1; j < n; ++j) {
      const double* ej = embeddings.row(j);
      double s = 0.0;
      for (int k = 0; k < embeddings.cols; ++k) {
        double diff = ei[k] - ej[k];
        s += diff * diff;
      }
      double v = std::sqrt(s);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

// Nearest-rank percentile of the upper-triangle distances.
inline double distance_percentile(const Matrix& distances, double percentile) {
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(distances.rows) * (distances.rows - 1) / 2);
  for (int i = 0; i < distances.rows; ++i)
    for (int j = i + 1; j < distances.cols; ++j) vals.push_back(distances(i, j));
  if (vals.empty()) return 1.0;
  std::sort(vals.begin(), vals.end());
  int idx = static_cast<int>(std::ceil(percentile / 100.0 * vals.size())) - 1;
  idx = std::clamp(idx, 0, static_cast<int>(vals.size()) - 1);
  return vals[idx];
}

// Gradient of the normalization step: given dL/dP for P = norm(S + I),
// return dL/dT with T = S + I. D_k depends on the whole row k of T, which
// produces the row-constant correction terms.
inline Matrix normalization_backward(const Matrix& dp, const Matrix& p,
                                     const std::vector<double>& degrees, GnnArch arch) {
  int n = dp.rows;
  Matrix dt(n, n);
  if (arch == GnnArch::GcnTwoLayer) {
    std::vector<double> row_dot(n, 0.0), col_dot(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double prod = dp(i, j) * p(i, j);
        row_dot[i] += prod;
        col_dot[j] += prod;
      }
    for (int k = 0; k < n; ++k) {
      double corr = 0.5 * (row_dot[k] + col_dot[k]) / degrees[k];
      for (int l = 0; l < n; ++l)
        dt(k, l) = dp(k, l) / std::sqrt(degrees[k] * degrees[l]) - corr;
    }
  } else {
    std::vector<double> row_dot(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) row_dot[i] += dp(i, j) * p(i, j);
    for (int k = 0; k < n; ++k) {
      double corr = row_dot[k] / degrees[k];
      for (int l = 0; l < n; ++l) dt(k, l) = dp(k, l) / degrees[k] - corr;
    }
  }
  return dt;
}

// Normalizes T = S + I per architecture, returning P and the degree vector.
inline Matrix normalize_soft(const Matrix& soft_adj, GnnArch arch, std::vector<double>& degrees) {
  int n = soft_adj.rows;
  degrees.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 1.0;  // self-loop
    for (int j = 0; j < n; ++j) s += soft_adj(i, j);
    degrees[i] = s;
  }
  Matrix p(n, n);
  if (arch == GnnArch::GcnTwoLayer) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double t = (i == j) ? 1.0 : soft_adj(i, j);
        p(i, j) = t / std::sqrt(degrees[i] * degrees[j]);
      }
    }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double t = (i == j) ? 1.0 : soft_adj(i, j);
        p(i, j) = t / degrees[i];
      }
  }
  return p;
}

}  // namespace unlearn_detail

struct GeneratorResult {
  GeneratorModel model;
  std::vector<double> objective_trace;  // 1 - mean confidence, per epoch
};

// Pseudo-labels: the target model's own predictions on the attributes as
// isolated nodes. This is all the server can know without graph structure.
inline std::vector<int> pseudo_labels_isolated(const GnnModel& target, const Matrix& attributes) {
  Graph iso;
  iso.node_count = attributes.rows;
  iso.num_classes = target.out_dim();
  iso.features = attributes;
  iso.labels.assign(attributes.rows, -1);
  iso.role = GraphRole::OwnerQuery;
  NormalizedAdjacency adj(iso);
  return predict(target, adj, attributes).labels;
}

// Trains the generator encoder so that the soft graph it induces over the
// attributes, pushed through the (frozen) target model, maximizes the mean
// confidence at the pseudo-labels. eps_u is fixed from the initial encoder
// and only the relaxation is differentiated.
inline GeneratorResult train_generator(const Matrix& attributes, const GnnModel& target,
                                       const std::vector<int>& pseudo_labels,
                                       const UnlearnConfig& cfg) {
  if (attributes.rows < 2)
    throw std::invalid_argument("train_generator: need at least two nodes");
  if (attributes.cols != target.in_dim())
    throw std::invalid_argument("train_generator: attribute dim does not match target input");
  if (static_cast<int>(pseudo_labels.size()) != attributes.rows)
    throw std::invalid_argument("train_generator: pseudo-label count mismatch");
  for (int y : pseudo_labels)
    if (y < 0 || y >= target.out_dim())
      throw std::invalid_argument("train_generator: pseudo-label out of range");

  int n = attributes.rows;
  int e = cfg.embed_dim;
  Rng rng(Rng::derive_seed(cfg.seed, "generator"));
  GeneratorModel gen;
  gen.w = glorot_uniform(attributes.cols, e, rng);
  gen.b.assign(e, 0.0);

  {
    Matrix emb = gen.encode(attributes);
    Matrix dist = unlearn_detail::pairwise_distances(emb);
    double eps = unlearn_detail::distance_percentile(dist, cfg.epsilon_percentile);
    gen.edge_threshold = std::max(eps, 1e-6);
    gen.soft_temperature = std::max(cfg.tau_factor * gen.edge_threshold, 1e-6);
  }

  // Adam state over encoder parameters.
  Matrix mw(gen.w.rows, gen.w.cols), vw(gen.w.rows, gen.w.cols);
  std::vector<double> mb(e, 0.0), vb(e, 0.0);
  int t = 0;
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  GeneratorResult result;
  result.objective_trace.reserve(cfg.generator_epochs);

  for (int epoch = 0; epoch < cfg.generator_epochs; ++epoch) {
    Matrix pre = matmul(attributes, gen.w);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < e; ++j) pre(i, j) += gen.b[j];
    Matrix emb = gnn_detail::relu(pre);
    Matrix dist = unlearn_detail::pairwise_distances(emb);

    Matrix soft(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j)
          soft(i, j) = unlearn_detail::stable_sigmoid(
              (gen.edge_threshold - dist(i, j)) / gen.soft_temperature);

    std::vector<double> degrees;
    Matrix p = unlearn_detail::normalize_soft(soft, target.arch, degrees);
    ForwardTrace trace = forward_dense(target, p, attributes);

    double mean_conf = 0.0;
    for (int i = 0; i < n; ++i) mean_conf += trace.probabilities(i, pseudo_labels[i]);
    mean_conf /= n;
    result.objective_trace.push_back(1.0 - mean_conf);

    // d(1 - mean confidence)/d logits through the softmax rows.
    Matrix dlogits(n, target.out_dim());
    for (int i = 0; i < n; ++i) {
      int y = pseudo_labels[i];
      double py = trace.probabilities(i, y);
      for (int k = 0; k < target.out_dim(); ++k) {
        double delta = (k == y) ? 1.0 : 0.0;
        dlogits(i, k) = -(py * (delta - trace.probabilities(i, k))) / n;
      }
    }

    Matrix dp = propagation_gradient(target, p, attributes, trace, dlogits);
    Matrix dt = unlearn_detail::normalization_backward(dp, p, degrees, target.arch);

    // Through the sigmoid relaxation to the distances, then to embeddings.
    Matrix demb(n, e);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double s = soft(i, j);
        double ddist = -dt(i, j) * s * (1.0 - s) / gen.soft_temperature;
        if (ddist == 0.0 || dist(i, j) <= 0.0) continue;
        double inv = ddist / dist(i, j);
        const double* ei = emb.row(i);
        const double* ej = emb.row(j);
        double* gi = demb.row(i);
        double* gj = demb.row(j);
        for (int k = 0; k < e; ++k) {
          double g = inv * (ei[k] - ej[k]);
          gi[k] += g;
          gj[k] -= g;
        }
      }
    }

    gnn_detail::mask_relu_backward(demb, pre);
    Matrix dw = matmul_at_b(attributes, demb);
    std::vector<double> db(e, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < e; ++j) db[j] += demb(i, j);

    ++t;
    gnn_detail::adam_update(gen.w, mw, vw, dw, cfg.generator_lr, b1, b2, adam_eps, t);
    double c1 = 1.0 - std::pow(b1, t);
    double c2 = 1.0 - std::pow(b2, t);
    for (int j = 0; j < e; ++j) {
      mb[j] = b1 * mb[j] + (1.0 - b1) * db[j];
      vb[j] = b2 * vb[j] + (1.0 - b2) * db[j] * db[j];
      gen.b[j] -= cfg.generator_lr * (mb[j] / c1) / (std::sqrt(vb[j] / c2) + adam_eps);
    }
  }

  result.model = std::move(gen);
  return result;
}

// Hard-threshold synthesis: edge iff embedding distance <= eps_u.
inline Graph synthesize_graph(const GeneratorModel& gen, const Matrix& attributes,
                              const std::vector<int>& labels, int num_classes, GraphRole role) {
  Graph g;
  g.node_count = attributes.rows;
  g.num_classes = num_classes;
  g.features = attributes;
  g.labels = labels;
  g.role = role;
  Matrix emb = gen.encode(attributes);
  Matrix dist = unlearn_detail::pairwise_distances(emb);
  for (int i = 0; i < g.node_count; ++i)
    for (int j = i + 1; j < g.node_count; ++j)
      if (dist(i, j) <= gen.edge_threshold) g.edges.push_back({i, j});
  return g;
}

struct FinetuneResult {
  GnnModel model;
  std::vector<double> remain_loss_trace;
  std::vector<double> ascent_term_trace;  // min(loss on unlearn graph, cap), per epoch
};

// Membership-aware fine-tuning: descend the loss on the synthetic remaining
// graph while ascending (weight alpha, capped) on the synthetic unlearn
// graph. With alpha = 0 or an empty unlearn graph this runs the exact same
// per-epoch step as plain training, so the traces match bit for bit.
inline FinetuneResult finetune_unlearn(GnnModel model, const Graph& remain, const Graph& unlearn,
                                       const UnlearnConfig& cfg) {
  if (cfg.alpha < 0.0) throw std::invalid_argument("finetune_unlearn: alpha must be >= 0");
  std::vector<int> remain_mask = remain.labeled_nodes();
  if (remain_mask.empty())
    throw std::invalid_argument("finetune_unlearn: remaining graph carries no labels");

  TrainConfig step_cfg;
  step_cfg.arch = model.arch;
  step_cfg.learning_rate = cfg.finetune_lr;
  step_cfg.optimizer = Optimizer::Adam;

  FinetuneResult result;
  result.remain_loss_trace.reserve(cfg.finetune_epochs);

  NormalizedAdjacency remain_adj(remain);
  AdamState state(model);

  bool with_ascent = cfg.alpha > 0.0 && unlearn.node_count > 0;
  if (!with_ascent) {
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
      double l = gnn_detail::ce_epoch(model, state, remain_adj, remain.features, remain.labels,
                                      remain_mask, step_cfg);
      if (!std::isfinite(l))
        throw std::runtime_error("finetune diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      result.remain_loss_trace.push_back(l);
    }
    result.model = std::move(model);
    return result;
  }

  std::vector<int> unlearn_mask = unlearn.labeled_nodes();
  if (unlearn_mask.empty())
    throw std::invalid_argument("finetune_unlearn: unlearn graph carries no labels");
  double cap = cfg.ascent_loss_cap ? *cfg.ascent_loss_cap
                                   : 2.0 * std::log(static_cast<double>(model.out_dim()));
  if (!(cap > 0.0)) throw std::invalid_argument("finetune_unlearn: ascent cap must be positive");

  NormalizedAdjacency unlearn_adj(unlearn);
  result.ascent_term_trace.reserve(cfg.finetune_epochs);

  for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    Propagator remain_prop(remain_adj, model.arch);
    ForwardTrace remain_trace = gnn_detail::forward_impl(model, remain_prop, remain.features);
    double remain_loss = loss(remain_trace, remain.labels, remain_mask);
    Matrix remain_cot =
        gnn_detail::ce_logit_cotangent(remain_trace.probabilities, remain.labels, remain_mask);
    Gradients grads =
        gnn_detail::backward_impl(model, remain_prop, remain_trace, remain_cot, false);

    Propagator unlearn_prop(unlearn_adj, model.arch);
    ForwardTrace unlearn_trace = gnn_detail::forward_impl(model, unlearn_prop, unlearn.features);
    double unlearn_loss = loss(unlearn_trace, unlearn.labels, unlearn_mask);
    double ascent_term = std::min(unlearn_loss, cap);
    if (unlearn_loss < cap) {
      // Past the cap the ascent term is constant, so its gradient vanishes.
      Matrix unlearn_cot =
          gnn_detail::ce_logit_cotangent(unlearn_trace.probabilities, unlearn.labels, unlearn_mask);
      Gradients ugrads =
          gnn_detail::backward_impl(model, unlearn_prop, unlearn_trace, unlearn_cot, false);
      add_in_place(grads.w0, ugrads.w0, -cfg.alpha);
      add_in_place(grads.w1, ugrads.w1, -cfg.alpha);
    }

    if (!std::isfinite(remain_loss) || !std::isfinite(unlearn_loss))
      throw std::runtime_error("finetune diverged: non-finite loss at epoch " +
                               std::to_string(epoch));
    optimizer_step(model, state, grads, step_cfg);
    result.remain_loss_trace.push_back(remain_loss);
    result.ascent_term_trace.push_back(ascent_term);
  }
  result.model = std::move(model);
  return result;
}

struct RetrainResult {
  GnnModel model;
  double elapsed_s = 0.0;
};

// From-scratch training on the authorized graph only; the wall clock covers
// the training loop, not I/O.
inline RetrainResult retrain_baseline(const Graph& authorized, const TrainConfig& cfg) {
  auto start = std::chrono::steady_clock::now();
  TrainResult tr = train(authorized, cfg);
  auto stop = std::chrono::steady_clock::now();
  return {std::move(tr.model), std::chrono::duration<double>(stop - start).count()};
}

// Best balanced accuracy of the threshold attack "member iff score > t".
inline double balanced_accuracy_attack(const std::vector<double>& member_scores,
                                       const std::vector<double>& nonmember_scores) {
  if (member_scores.empty() || nonmember_scores.empty())
    throw std::invalid_argument("balanced_accuracy_attack: empty score vector");
  std::vector<double> candidates = member_scores;
  candidates.insert(candidates.end(), nonmember_scores.begin(), nonmember_scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.push_back(candidates.front() - 1.0);  // "everything is a member"

  double best = 0.0;
  for (double t : candidates) {
    int tp = 0;
    for (double s : member_scores)
      if (s > t) ++tp;
    int tn = 0;
    for (double s : nonmember_scores)
      if (s <= t) ++tn;
    double balanced = 0.5 * (static_cast<double>(tp) / member_scores.size() +
                             static_cast<double>(tn) / nonmember_scores.size());
    best = std::max(best, balanced);
  }
  return best;
}

namespace unlearn_detail {

inline std::vector<double> structure_free_confidences(const GnnModel& model, const Graph& g) {
  Graph query = strip_structure(g);
  NormalizedAdjacency adj(query);
  Matrix probs = forward(model, adj, query.features).probabilities;
  std::vector<double> scores(g.node_count);
  for (int i = 0; i < g.node_count; ++i) scores[i] = probs(i, g.labels[i]);
  return scores;
}

}  // namespace unlearn_detail

// Before/after unlearning comparison: membership-attack balanced accuracy on
// the unlearned nodes vs held-out nodes, plus eval-graph accuracy against the
// retrain baseline. Wall times are the caller's timers.
inline UnlearnReport evaluate_unlearning(const GnnModel& before, const GnnModel& after,
                                         const GnnModel& retrain, const DatasetBundle& bundle,
                                         double time_retrain_s = 0.0, double time_unlearn_s = 0.0) {
  UnlearnReport report;
  auto eval_scores_before = unlearn_detail::structure_free_confidences(before, bundle.eval_graph);
  auto member_before = unlearn_detail::structure_free_confidences(before, bundle.owner_graph);
  auto eval_scores_after = unlearn_detail::structure_free_confidences(after, bundle.eval_graph);
  auto member_after = unlearn_detail::structure_free_confidences(after, bundle.owner_graph);

  report.pre_mia_accuracy = balanced_accuracy_attack(member_before, eval_scores_before);
  report.post_mia_accuracy = balanced_accuracy_attack(member_after, eval_scores_after);
  report.accuracy_retrain = accuracy(retrain, bundle.eval_graph);
  report.accuracy_unlearned = accuracy(after, bundle.eval_graph);
  report.delta_accuracy = report.accuracy_retrain - report.accuracy_unlearned;
  report.time_retrain_s = time_retrain_s;
  report.time_unlearn_s = time_unlearn_s;
  return report;
}

inline nlohmann::ordered_json unlearn_report_to_json(const UnlearnReport& r,
                                                     bool include_times = true) {
  nlohmann::ordered_json j;
  j["pre_mia_accuracy"] = r.pre_mia_accuracy;
  j["post_mia_accuracy"] = r.post_mia_accuracy;
  j["accuracy_retrain"] = r.accuracy_retrain;
  j["accuracy_unlearned"] = r.accuracy_unlearned;
  j["delta_accuracy"] = r.delta_accuracy;
  if (include_times) {
    j["time_retrain_s"] = r.time_retrain_s;
    j["time_unlearn_s"] = r.time_unlearn_s;
  }
  return j;
}

}  // namespace graphguard
