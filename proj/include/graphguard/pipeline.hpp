#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "graphguard/dataset.hpp"
#include "graphguard/detection.hpp"
#include "graphguard/gnn.hpp"
#include "graphguard/graph.hpp"
#include "graphguard/mlaas.hpp"
#include "graphguard/radioactive.hpp"
#include "graphguard/unlearning.hpp"

namespace graphguard {

enum class Scenario { Misuse, Benign };

inline const char* scenario_name(Scenario s) {
  return s == Scenario::Misuse ? "misuse" : "benign";
}

struct SyntheticDatasetConfig {
  int nodes = 600;
  int classes = 3;
  int features = 64;
  double intra_edge_prob = 0.10;
  double inter_edge_prob = 0.02;
  double feature_signal = 0.80;
  std::array<double, 4> fractions{0.25, 0.25, 0.25, 0.25};
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  SyntheticDatasetConfig dataset;
  std::optional<DatasetBundle> bundle_override;  // set when graphs come from files
  TrainConfig train;
  int radioactive_epochs = 20;
  int flips_per_epoch = 0;  // 0 = default budget rule
  DetectorConfig detector;
  UnlearnConfig unlearn;
  double denoise_floor = 0.3;
};

struct PipelineReport {
  Scenario scenario = Scenario::Misuse;
  std::uint64_t seed = 0;
  bool compliant = true;
  DetectionReport detection;
  std::optional<UnlearnReport> unlearn;
  bool unlearning_skipped = true;
  std::vector<std::string> notes;
  AuditLog audit;

  // Artifacts for callers that persist files; not part of the JSON report.
  DatasetBundle bundle;
  RadioactiveResult radioactive;
  GnnModel deployed_model;
  std::optional<GnnModel> unlearned_model;
};

inline nlohmann::ordered_json pipeline_config_to_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["dataset"] = {{"nodes", cfg.dataset.nodes},
                  {"classes", cfg.dataset.classes},
                  {"features", cfg.dataset.features},
                  {"intra_edge_prob", cfg.dataset.intra_edge_prob},
                  {"inter_edge_prob", cfg.dataset.inter_edge_prob},
                  {"feature_signal", cfg.dataset.feature_signal},
                  {"fractions", cfg.dataset.fractions}};
  j["model"] = {{"arch", arch_name(cfg.train.arch)},
                {"hidden", cfg.train.hidden_dim},
                {"learning_rate", cfg.train.learning_rate},
                {"epochs", cfg.train.epochs},
                {"optimizer", cfg.train.optimizer == Optimizer::Adam ? "adam" : "sgd"}};
  j["radioactive"] = {{"max_epochs", cfg.radioactive_epochs},
                      {"flips_per_epoch", cfg.flips_per_epoch}};
  nlohmann::ordered_json det;
  det["threshold"] = cfg.detector.threshold ? nlohmann::ordered_json(*cfg.detector.threshold)
                                            : nlohmann::ordered_json("auto");
  det["fpr_target"] = cfg.detector.fpr_target;
  det["histogram_bins"] = cfg.detector.histogram_bins;
  j["detection"] = det;
  j["unlearning"] = {{"alpha", cfg.unlearn.alpha},
                     {"finetune_epochs", cfg.unlearn.finetune_epochs},
                     {"finetune_lr", cfg.unlearn.finetune_lr},
                     {"generator_epochs", cfg.unlearn.generator_epochs},
                     {"generator_lr", cfg.unlearn.generator_lr},
                     {"embed_dim", cfg.unlearn.embed_dim},
                     {"tau_factor", cfg.unlearn.tau_factor},
                     {"epsilon_percentile", cfg.unlearn.epsilon_percentile}};
  j["robustness"] = {{"denoise_floor", cfg.denoise_floor}};
  return j;
}

namespace pipeline_detail {

struct Prepared {
  DatasetBundle bundle;
  GnnModel surrogate;
  RadioactiveResult radioactive;
};

inline DatasetBundle make_bundle(const PipelineConfig& cfg) {
  if (cfg.bundle_override) return *cfg.bundle_override;
  std::uint64_t seed_data = Rng::derive_seed(cfg.seed, "dataset");
  Graph base = generate_synthetic(cfg.dataset.nodes, cfg.dataset.classes, cfg.dataset.features,
                                  cfg.dataset.intra_edge_prob, cfg.dataset.inter_edge_prob,
                                  cfg.dataset.feature_signal, seed_data);
  return split_inductive(base, cfg.dataset.fractions, seed_data);
}

// Owner-side preparation: surrogate training on the public split, then the
// radioactive construction. Everything here happens before any payload moves.
inline Prepared prepare(const PipelineConfig& cfg) {
  Prepared prep;
  prep.bundle = make_bundle(cfg);

  TrainConfig surrogate_cfg = cfg.train;
  surrogate_cfg.seed = Rng::derive_seed(cfg.seed, "surrogate");
  prep.surrogate = train(prep.bundle.surrogate_graph, surrogate_cfg).model;

  RadioactiveConfig rcfg;
  rcfg.max_epochs = cfg.radioactive_epochs;
  rcfg.flips_per_epoch = cfg.flips_per_epoch;
  rcfg.surrogate = prep.surrogate;
  prep.radioactive = construct_radioactive(prep.bundle.owner_graph, rcfg);
  return prep;
}

inline GnnModel train_developer_model(const Graph& training_graph, const PipelineConfig& cfg) {
  TrainConfig dev_cfg = cfg.train;
  dev_cfg.seed = Rng::derive_seed(cfg.seed, "developer");
  return train(training_graph, dev_cfg).model;
}

// Deploys the developer model through the guarded channel and returns the
// server-side copy parsed from the transmitted bytes.
inline GnnModel deploy_model(MlaasSim& sim, const GnnModel& model) {
  sim.transmit_or_throw({EntityKind::ModelDeveloper, EntityKind::Server,
                         PayloadContent::ModelParams, serialize_model(model),
                         "model deployment"});
  GnnModel hosted = parse_model(sim.transcript().back().bytes);
  sim.server().holdings.insert("f*");
  return hosted;
}

inline Matrix attributes_only(const Graph& g) { return g.features; }

inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  check_shape(top.cols == bottom.cols, "vstack: column mismatch");
  Matrix out(top.rows + bottom.rows, top.cols);
  for (int i = 0; i < top.rows; ++i)
    for (int j = 0; j < top.cols; ++j) out(i, j) = top(i, j);
  for (int i = 0; i < bottom.rows; ++i)
    for (int j = 0; j < bottom.cols; ++j) out(top.rows + i, j) = bottom(i, j);
  return out;
}

}  // namespace pipeline_detail

// Full scenario run: radioactivation, (mis)training, deployment, guarded
// detection, and, on a positive verdict, server-side unlearning with the
// retrain baseline for comparison. Any guard violation aborts the run.
inline PipelineReport run_pipeline(Scenario scenario, const PipelineConfig& cfg) {
  PipelineReport report;
  report.scenario = scenario;
  report.seed = cfg.seed;

  pipeline_detail::Prepared prep = pipeline_detail::prepare(cfg);
  report.bundle = prep.bundle;
  report.radioactive = prep.radioactive;

  // The misuse event itself is out-of-band: in the misuse scenario the
  // developer has obtained the owner's radioactive graph without any payload
  // crossing the simulated boundary.
  Graph training_graph;
  if (scenario == Scenario::Misuse) {
    training_graph = merge_graphs(prep.bundle.authorized_graph, prep.radioactive.graph);
    report.notes.push_back("misuse event: developer trains on authorized + owner graphs");
  } else {
    training_graph = prep.bundle.authorized_graph;
    report.notes.push_back("benign scenario: developer trains on the authorized graph only");
  }
  GnnModel developer_model = pipeline_detail::train_developer_model(training_graph, cfg);

  MlaasSim sim;
  GnnModel hosted = pipeline_detail::deploy_model(sim, developer_model);
  report.deployed_model = hosted;

  OwnerServingAccess access(sim, hosted);
  report.detection = detect_radioactive(access, prep.radioactive.graph, prep.bundle.eval_graph,
                                        cfg.detector);

  if (report.detection.decision) {
    sim.transmit_or_throw({EntityKind::DataOwner, EntityKind::Server,
                           PayloadContent::UnlearnRequest,
                           nlohmann::ordered_json{{"request", "unlearn"},
                                                  {"nodes", prep.radioactive.graph.node_count}}
                               .dump(),
                           "unlearning request"});
    sim.transmit_or_throw({EntityKind::DataOwner, EntityKind::Server,
                           PayloadContent::NodeAttributes,
                           serialize_graph(strip_structure(prep.radioactive.graph),
                                           /*include_labels=*/false),
                           "owner node attributes"});
    Graph owner_attrs = parse_graph(sim.transcript().back().bytes, GraphRole::OwnerQuery);
    sim.transmit_or_throw({EntityKind::ModelDeveloper, EntityKind::Server,
                           PayloadContent::NodeAttributes,
                           serialize_graph(strip_structure(prep.bundle.authorized_graph),
                                           /*include_labels=*/false),
                           "developer node attributes"});
    Graph dev_attrs = parse_graph(sim.transcript().back().bytes, GraphRole::OwnerQuery);
    sim.server().holdings.insert("X_p");

    UnlearnConfig ucfg = cfg.unlearn;
    ucfg.seed = Rng::derive_seed(cfg.seed, "unlearn");

    auto unlearn_start = std::chrono::steady_clock::now();
    Matrix union_attrs = pipeline_detail::vstack(owner_attrs.features, dev_attrs.features);
    std::vector<int> pseudo = pseudo_labels_isolated(hosted, union_attrs);
    GeneratorResult gen = train_generator(union_attrs, hosted, pseudo, ucfg);

    int c = hosted.out_dim();
    Graph unlearn_graph =
        synthesize_graph(gen.model, owner_attrs.features,
                         std::vector<int>(owner_attrs.features.rows, -1), c,
                         GraphRole::SyntheticUnlearn);
    Graph remain_graph =
        synthesize_graph(gen.model, dev_attrs.features,
                         std::vector<int>(dev_attrs.features.rows, -1), c,
                         GraphRole::SyntheticRemain);
    // Pseudo-labels for fine-tuning: the hosted model's own predictions on
    // the synthetic graphs, fixed before any weight moves.
    unlearn_graph.labels =
        predict(hosted, NormalizedAdjacency(unlearn_graph), unlearn_graph.features).labels;
    remain_graph.labels =
        predict(hosted, NormalizedAdjacency(remain_graph), remain_graph.features).labels;

    FinetuneResult finetuned = finetune_unlearn(hosted, remain_graph, unlearn_graph, ucfg);
    auto unlearn_stop = std::chrono::steady_clock::now();
    double time_unlearn = std::chrono::duration<double>(unlearn_stop - unlearn_start).count();

    TrainConfig retrain_cfg = cfg.train;
    retrain_cfg.seed = Rng::derive_seed(cfg.seed, "retrain");
    RetrainResult retrained = retrain_baseline(prep.bundle.authorized_graph, retrain_cfg);

    DatasetBundle eval_bundle = prep.bundle;
    eval_bundle.owner_graph = prep.radioactive.graph;  // what the model actually saw
    report.unlearn = evaluate_unlearning(hosted, finetuned.model, retrained.model, eval_bundle,
                                         retrained.elapsed_s, time_unlearn);
    report.unlearned_model = std::move(finetuned.model);
    report.unlearning_skipped = false;

    sim.transmit_or_throw({EntityKind::Server, EntityKind::DataOwner, PayloadContent::Report,
                           unlearn_report_to_json(*report.unlearn, /*include_times=*/false).dump(),
                           "unlearning report"});
  } else {
    report.unlearning_skipped = true;
    report.notes.push_back("detection negative: unlearning skipped");
  }

  report.audit = sim.audit();
  report.compliant = sim.audit().compliant();
  return report;
}

// JSON view of a pipeline run. Wall-clock timings are deliberately not part
// of this document (they go to the timings sidecar) so a fixed seed yields
// byte-identical reports.
inline nlohmann::ordered_json pipeline_report_to_json(const PipelineReport& report,
                                                      const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["scenario"] = scenario_name(report.scenario);
  j["seed"] = report.seed;
  j["compliant"] = report.compliant;
  j["config"] = pipeline_config_to_json(cfg);
  j["detection"] = detection_report_to_json(report.detection);
  j["unlearning"] = report.unlearn
                        ? unlearn_report_to_json(*report.unlearn, /*include_times=*/false)
                        : nlohmann::ordered_json(nullptr);
  j["unlearning_skipped"] = report.unlearning_skipped;
  j["notes"] = report.notes;
  j["audit"] = report.audit.to_json();
  return j;
}

struct RobustnessResult {
  DetectionReport without_denoise;
  DetectionReport with_denoise;
  double denoise_floor = 0.0;
  int edges_before = 0;
  int edges_after = 0;
};

// Trains the misused model twice, on the gathered graph as-is and on its
// denoised version, and reports both detections. The radioactive graph and
// all seeds are shared across the arms.
inline RobustnessResult robustness_experiment(const PipelineConfig& cfg) {
  pipeline_detail::Prepared prep = pipeline_detail::prepare(cfg);
  Graph merged = merge_graphs(prep.bundle.authorized_graph, prep.radioactive.graph);
  Graph denoised = denoise_graph(merged, cfg.denoise_floor);

  RobustnessResult result;
  result.denoise_floor = cfg.denoise_floor;
  result.edges_before = static_cast<int>(merged.edges.size());
  result.edges_after = static_cast<int>(denoised.edges.size());

  auto run_arm = [&](const Graph& training_graph) {
    GnnModel model = pipeline_detail::train_developer_model(training_graph, cfg);
    MlaasSim sim;
    GnnModel hosted = pipeline_detail::deploy_model(sim, model);
    OwnerServingAccess access(sim, hosted);
    return detect_radioactive(access, prep.radioactive.graph, prep.bundle.eval_graph,
                              cfg.detector);
  };
  result.without_denoise = run_arm(merged);
  result.with_denoise = run_arm(denoised);
  return result;
}

inline nlohmann::ordered_json robustness_result_to_json(const RobustnessResult& r) {
  nlohmann::ordered_json j;
  j["denoise_floor"] = r.denoise_floor;
  j["edges_before"] = r.edges_before;
  j["edges_after"] = r.edges_after;
  j["auc_without_denoise"] = r.without_denoise.auc;
  j["auc_with_denoise"] = r.with_denoise.auc;
  j["auc_delta"] = r.with_denoise.auc - r.without_denoise.auc;
  j["detection_without_denoise"] = detection_report_to_json(r.without_denoise);
  j["detection_with_denoise"] = detection_report_to_json(r.with_denoise);
  return j;
}

}  // namespace graphguard
