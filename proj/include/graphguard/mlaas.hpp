#pragma once

#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "graphguard/detection.hpp"
#include "graphguard/gnn.hpp"
#include "graphguard/graph.hpp"
#include "graphguard/graph_io.hpp"

namespace graphguard {

enum class EntityKind { DataOwner, ModelDeveloper, Server };

inline const char* entity_name(EntityKind k) {
  switch (k) {
    case EntityKind::DataOwner: return "owner";
    case EntityKind::ModelDeveloper: return "developer";
    case EntityKind::Server: return "server";
  }
  return "?";
}

enum class PayloadContent {
  NodeAttributes,
  StructureFreeGraph,
  FullGraph,
  Predictions,
  ModelParams,
  UnlearnRequest,
  Report,
};

inline const char* content_name(PayloadContent c) {
  switch (c) {
    case PayloadContent::NodeAttributes: return "node_attributes";
    case PayloadContent::StructureFreeGraph: return "structure_free_graph";
    case PayloadContent::FullGraph: return "full_graph";
    case PayloadContent::Predictions: return "predictions";
    case PayloadContent::ModelParams: return "model_params";
    case PayloadContent::UnlearnRequest: return "unlearn_request";
    case PayloadContent::Report: return "report";
  }
  return "?";
}

struct Entity {
  EntityKind kind;
  std::set<std::string> holdings;  // asset handles, e.g. "A_p", "X_p", "f*"
};

struct Payload {
  EntityKind sender;
  EntityKind receiver;
  PayloadContent content;
  std::string bytes;
  std::string summary;
};

enum class Verdict { Allowed, Violation };

// The capability matrix, as a pure function of (content, sender, receiver).
// Graph structure never crosses a boundary; models never reach the owner.
inline Verdict guard_payload(PayloadContent content, EntityKind sender, EntityKind receiver) {
  using E = EntityKind;
  using C = PayloadContent;
  switch (content) {
    case C::NodeAttributes:
      if ((sender == E::DataOwner || sender == E::ModelDeveloper) && receiver == E::Server)
        return Verdict::Allowed;
      return Verdict::Violation;
    case C::StructureFreeGraph:
      return (sender == E::DataOwner && receiver == E::Server) ? Verdict::Allowed
                                                               : Verdict::Violation;
    case C::FullGraph:
      return Verdict::Violation;
    case C::Predictions:
      return sender == E::Server ? Verdict::Allowed : Verdict::Violation;
    case C::ModelParams:
      return (sender == E::ModelDeveloper && receiver == E::Server) ? Verdict::Allowed
                                                                    : Verdict::Violation;
    case C::UnlearnRequest:
      return (sender == E::DataOwner && receiver == E::Server) ? Verdict::Allowed
                                                               : Verdict::Violation;
    case C::Report:
      return (sender == E::Server && receiver == E::DataOwner) ? Verdict::Allowed
                                                               : Verdict::Violation;
  }
  return Verdict::Violation;
}

inline Verdict guard_payload(const Payload& p) {
  return guard_payload(p.content, p.sender, p.receiver);
}

struct AuditEntry {
  int step;
  std::string route;
  std::string content;
  std::string summary;
  Verdict verdict;
};

class AuditLog {
 public:
  void append(AuditEntry entry) { entries_.push_back(std::move(entry)); }
  const std::vector<AuditEntry>& entries() const { return entries_; }

  bool compliant() const {
    for (const auto& e : entries_)
      if (e.verdict == Verdict::Violation) return false;
    return true;
  }

  std::string to_text() const {
    std::ostringstream out;
    for (const auto& e : entries_) {
      out << "step=" << e.step << " verdict="
          << (e.verdict == Verdict::Allowed ? "allowed" : "violation") << " content=" << e.content
          << " route=" << e.route << " summary=" << e.summary << '\n';
    }
    return out.str();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : entries_) {
      nlohmann::ordered_json j;
      j["step"] = e.step;
      j["route"] = e.route;
      j["content"] = e.content;
      j["summary"] = e.summary;
      j["verdict"] = e.verdict == Verdict::Allowed ? "allowed" : "violation";
      arr.push_back(std::move(j));
    }
    return arr;
  }

 private:
  std::vector<AuditEntry> entries_;
};

// In-process transport between the three entities. Every payload is a
// serialized byte string; the guard rules on the declared triple, and graph
// payloads are additionally parsed so a smuggled edge section is caught
// regardless of the declared content. All traffic is retained for byte-level
// inspection.
class MlaasSim {
 public:
  MlaasSim() {
    owner_ = {EntityKind::DataOwner, {"A_p", "X_p"}};
    developer_ = {EntityKind::ModelDeveloper, {"G_m0"}};
    server_ = {EntityKind::Server, {}};
  }

  Entity& owner() { return owner_; }
  Entity& developer() { return developer_; }
  Entity& server() { return server_; }
  AuditLog& audit() { return audit_; }
  const AuditLog& audit() const { return audit_; }
  const std::vector<Payload>& transcript() const { return transcript_; }

  Verdict transmit(Payload p) {
    Verdict verdict = guard_payload(p);
    if (verdict == Verdict::Allowed && payload_carries_adjacency(p)) {
      verdict = Verdict::Violation;
      p.summary += " [bytes carry adjacency]";
    }
    audit_.append({++step_, std::string(entity_name(p.sender)) + "->" + entity_name(p.receiver),
                   content_name(p.content), p.summary, verdict});
    transcript_.push_back(std::move(p));
    return verdict;
  }

  // Transmit that treats a violation as a protocol failure.
  void transmit_or_throw(Payload p) {
    std::string what = std::string("payload rejected: ") + content_name(p.content) + " " +
                       entity_name(p.sender) + "->" + entity_name(p.receiver);
    if (transmit(std::move(p)) == Verdict::Violation) throw std::runtime_error(what);
  }

  // True when any byte string that parses as a graph carries an edge.
  static bool payload_carries_adjacency(const Payload& p) {
    if (p.bytes.rfind("nodes=", 0) != 0) return false;
    try {
      Graph g = parse_graph(p.bytes);
      return !g.edges.empty();
    } catch (const std::exception&) {
      return false;  // not a graph payload after all
    }
  }

 private:
  Entity owner_;
  Entity developer_;
  Entity server_;
  AuditLog audit_;
  std::vector<Payload> transcript_;
  int step_ = 0;
};

// Owner-side access to the server's prediction endpoint: the query is
// serialized, guarded, parsed back on the server side and answered with a
// predictions payload. Only the bytes that crossed the wire are used.
class OwnerServingAccess : public PredictionAccess {
 public:
  OwnerServingAccess(MlaasSim& sim, const GnnModel& hosted_model)
      : sim_(&sim), model_(&hosted_model) {}

  Matrix predict_probabilities(const Graph& query) override {
    PayloadContent content = query.edges.empty() ? PayloadContent::StructureFreeGraph
                                                 : PayloadContent::FullGraph;
    Payload request{EntityKind::DataOwner, EntityKind::Server, content,
                    serialize_graph(query, /*include_labels=*/false),
                    "membership query, " + std::to_string(query.node_count) + " nodes"};
    if (sim_->transmit(std::move(request)) == Verdict::Violation)
      throw std::runtime_error("serving rejected the query: structure-bearing payload");

    Graph received = parse_graph(sim_->transcript().back().bytes, GraphRole::OwnerQuery);
    NormalizedAdjacency adj(received);
    Matrix probs = forward(*model_, adj, received.features).probabilities;

    nlohmann::ordered_json pj = nlohmann::ordered_json::array();
    for (int i = 0; i < probs.rows; ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int j = 0; j < probs.cols; ++j) row.push_back(probs(i, j));
      pj.push_back(std::move(row));
    }
    sim_->transmit_or_throw({EntityKind::Server, EntityKind::DataOwner,
                             PayloadContent::Predictions, pj.dump(),
                             "prediction rows: " + std::to_string(probs.rows)});

    nlohmann::json parsed = nlohmann::json::parse(sim_->transcript().back().bytes);
    Matrix out(static_cast<int>(parsed.size()), probs.cols);
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out(i, j) = parsed[i][j].get<double>();
    return out;
  }

 private:
  MlaasSim* sim_;
  const GnnModel* model_;
};

inline Matrix serve_predict(MlaasSim& sim, const GnnModel& hosted_model, const Graph& query) {
  OwnerServingAccess access(sim, hosted_model);
  return access.predict_probabilities(query);
}

// Structure-level defense proxy: drop every edge whose endpoints' feature
// Jaccard similarity falls below the floor. Features are untouched.
inline Graph denoise_graph(const Graph& g, double similarity_floor) {
  if (similarity_floor < 0.0 || similarity_floor > 1.0)
    throw std::invalid_argument("denoise_graph: similarity_floor must lie in [0,1]");
  Graph out = g;
  out.edges.clear();
  for (auto [i, j] : g.edges)
    if (feature_jaccard(g.features, i, j) >= similarity_floor) out.edges.push_back({i, j});
  return out;
}

}  // namespace graphguard
