#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "graphguard/gnn.hpp"
#include "graphguard/graph.hpp"

namespace graphguard {

// Prediction access to a hosted model. Implementations decide which query
// shapes they accept; a rejected query surfaces as an exception.
class PredictionAccess {
 public:
  virtual ~PredictionAccess() = default;
  virtual Matrix predict_probabilities(const Graph& query) = 0;
};

// Direct in-process access, used by the comparison arm (which assumes local
// access) and by evaluation harnesses.
class LocalModelAccess : public PredictionAccess {
 public:
  explicit LocalModelAccess(const GnnModel& model) : model_(&model) {}
  Matrix predict_probabilities(const Graph& query) override {
    NormalizedAdjacency adj(query);
    return forward(*model_, adj, query.features).probabilities;
  }

 private:
  const GnnModel* model_;
};

struct DetectorConfig {
  std::optional<double> threshold;  // empty = auto
  double fpr_target = 0.01;
  int histogram_bins = 20;
};

struct DetectionReport {
  std::vector<double> member_scores;
  std::vector<double> nonmember_scores;
  double mcs = 0.0;
  double auc = 0.0;
  double tpr_at_fpr = 0.0;
  double chosen_threshold = 0.0;
  bool decision = false;
};

// Confidence the model assigns to the node's true class.
inline double node_confidence(const std::vector<double>& probability_row, int true_label) {
  if (true_label < 0 || true_label >= static_cast<int>(probability_row.size()))
    throw std::invalid_argument("node_confidence: label out of range");
  return probability_row[true_label];
}

inline std::vector<double> confidence_scores(const Matrix& probabilities,
                                             const std::vector<int>& labels) {
  std::vector<double> scores(probabilities.rows);
  for (int i = 0; i < probabilities.rows; ++i) {
    int y = labels[i];
    if (y < 0 || y >= probabilities.cols)
      throw std::invalid_argument("confidence_scores: label out of range");
    scores[i] = probabilities(i, y);
  }
  return scores;
}

inline double mcs(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("mcs: empty score vector");
  double s = 0.0;
  for (double v : scores) s += v;
  return s / static_cast<double>(scores.size());
}

// Membership verdict; the boundary mcs == eta counts as non-member.
inline bool decide(double mcs_value, double eta) { return mcs_value > eta; }

// Exact Mann-Whitney AUC via midranks; ties count one half. Equals the
// O(m*n) pairwise count in exact arithmetic.
inline double roc_auc(const std::vector<double>& member_scores,
                      const std::vector<double>& nonmember_scores) {
  if (member_scores.empty() || nonmember_scores.empty())
    throw std::invalid_argument("roc_auc: both score vectors must be nonempty");

  struct Tagged {
    double score;
    bool member;
  };
  std::vector<Tagged> all;
  all.reserve(member_scores.size() + nonmember_scores.size());
  for (double s : member_scores) all.push_back({s, true});
  for (double s : nonmember_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.score < b.score; });

  double rank_sum = 0.0;  // midrank sum over members, 1-based ranks
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].member) rank_sum += midrank;
    i = j;
  }
  double m = static_cast<double>(member_scores.size());
  double n = static_cast<double>(nonmember_scores.size());
  double u = rank_sum - m * (m + 1.0) / 2.0;
  return u / (m * n);
}

struct TprResult {
  double tpr;
  double threshold;
};

// True-positive rate at a false-positive budget: with n non-members and
// budget floor(fpr_target * n), the threshold is the (budget+1)-th largest
// non-member score and positives are scores strictly above it.
inline TprResult tpr_at_fpr(const std::vector<double>& member_scores,
                            const std::vector<double>& nonmember_scores, double fpr_target) {
  if (member_scores.empty() || nonmember_scores.empty())
    throw std::invalid_argument("tpr_at_fpr: both score vectors must be nonempty");
  if (!(fpr_target > 0.0) || !(fpr_target < 1.0))
    throw std::invalid_argument("tpr_at_fpr: fpr_target must lie in (0,1)");

  std::vector<double> sorted = nonmember_scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  int allowed = static_cast<int>(fpr_target * static_cast<double>(sorted.size()));
  double threshold = sorted[std::min<std::size_t>(allowed, sorted.size() - 1)];
  int hits = 0;
  for (double s : member_scores)
    if (s > threshold) ++hits;
  return {static_cast<double>(hits) / static_cast<double>(member_scores.size()), threshold};
}

// Auto threshold: midpoint between the non-member score quantile at
// (1 - fpr_target) (nearest rank) and the minimum member score.
inline double auto_threshold(const std::vector<double>& member_scores,
                             const std::vector<double>& nonmember_scores, double fpr_target) {
  std::vector<double> sorted = nonmember_scores;
  std::sort(sorted.begin(), sorted.end());
  double q = 1.0 - fpr_target;
  int idx = static_cast<int>(std::ceil(q * static_cast<double>(sorted.size()))) - 1;
  idx = std::clamp(idx, 0, static_cast<int>(sorted.size()) - 1);
  double min_member = *std::min_element(member_scores.begin(), member_scores.end());
  return std::clamp(0.5 * (sorted[idx] + min_member), 0.0, 1.0);
}

namespace detection_detail {

inline DetectionReport build_report(std::vector<double> member_scores,
                                    std::vector<double> nonmember_scores,
                                    const DetectorConfig& cfg) {
  DetectionReport report;
  report.member_scores = std::move(member_scores);
  report.nonmember_scores = std::move(nonmember_scores);
  report.mcs = mcs(report.member_scores);
  report.auc = roc_auc(report.member_scores, report.nonmember_scores);
  report.tpr_at_fpr = tpr_at_fpr(report.member_scores, report.nonmember_scores, cfg.fpr_target).tpr;
  report.chosen_threshold =
      cfg.threshold ? *cfg.threshold
                    : auto_threshold(report.member_scores, report.nonmember_scores, cfg.fpr_target);
  report.decision = decide(report.mcs, report.chosen_threshold);
  return report;
}

}  // namespace detection_detail

// Structure-free detection: both cohorts are queried with every edge
// removed, so no adjacency ever reaches the serving side.
inline DetectionReport detect_radioactive(PredictionAccess& serving, const Graph& owner_graph,
                                          const Graph& eval_graph, const DetectorConfig& cfg) {
  Graph owner_query = strip_structure(owner_graph);
  Graph eval_query = strip_structure(eval_graph);
  Matrix owner_probs = serving.predict_probabilities(owner_query);
  Matrix eval_probs = serving.predict_probabilities(eval_query);
  return detection_detail::build_report(confidence_scores(owner_probs, owner_graph.labels),
                                        confidence_scores(eval_probs, eval_graph.labels), cfg);
}

// Comparison arm: the same scoring pipeline, but the queries keep their true
// adjacency and the owner graph is the non-radioactive original.
inline DetectionReport detect_baseline(PredictionAccess& serving_full, const Graph& owner_graph,
                                       const Graph& eval_graph, const DetectorConfig& cfg) {
  Matrix owner_probs = serving_full.predict_probabilities(owner_graph);
  Matrix eval_probs = serving_full.predict_probabilities(eval_graph);
  return detection_detail::build_report(confidence_scores(owner_probs, owner_graph.labels),
                                        confidence_scores(eval_probs, eval_graph.labels), cfg);
}

inline nlohmann::ordered_json detection_report_to_json(const DetectionReport& r) {
  nlohmann::ordered_json j;
  j["member_scores"] = r.member_scores;
  j["nonmember_scores"] = r.nonmember_scores;
  j["mcs"] = r.mcs;
  j["auc"] = r.auc;
  j["tpr_at_fpr"] = r.tpr_at_fpr;
  j["threshold"] = r.chosen_threshold;
  j["decision"] = r.decision;
  return j;
}

// --- score histograms -------------------------------------------------------

struct Histogram {
  int bins = 0;
  std::vector<int> member_counts;
  std::vector<int> nonmember_counts;

  double bin_lo(int i) const { return static_cast<double>(i) / bins; }
  double bin_hi(int i) const { return static_cast<double>(i + 1) / bins; }
};

// Equal-width bins covering [0,1]; a score of exactly 1 lands in the last bin.
inline Histogram build_histogram(const DetectionReport& report, int bins) {
  if (bins < 1) throw std::invalid_argument("build_histogram: need at least one bin");
  Histogram h;
  h.bins = bins;
  h.member_counts.assign(bins, 0);
  h.nonmember_counts.assign(bins, 0);
  auto bin_of = [bins](double s) {
    int b = static_cast<int>(s * bins);
    return std::clamp(b, 0, bins - 1);
  };
  for (double s : report.member_scores) ++h.member_counts[bin_of(s)];
  for (double s : report.nonmember_scores) ++h.nonmember_counts[bin_of(s)];
  return h;
}

inline std::string histogram_to_csv(const Histogram& h) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,member_count,nonmember_count\n";
  for (int i = 0; i < h.bins; ++i) {
    out << gnn_detail::format_double(h.bin_lo(i)) << ',' << gnn_detail::format_double(h.bin_hi(i))
        << ',' << h.member_counts[i] << ',' << h.nonmember_counts[i] << '\n';
  }
  return out.str();
}

inline Histogram parse_histogram_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "bin_lo,bin_hi,member_count,nonmember_count")
    throw std::runtime_error("histogram csv: bad header");
  Histogram h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string lo, hi, m, n;
    if (!std::getline(ls, lo, ',') || !std::getline(ls, hi, ',') || !std::getline(ls, m, ',') ||
        !std::getline(ls, n))
      throw std::runtime_error("histogram csv: malformed row");
    h.member_counts.push_back(std::stoi(m));
    h.nonmember_counts.push_back(std::stoi(n));
    ++h.bins;
  }
  return h;
}

// Minimal overlaid bar chart; members in orange, non-members in blue.
inline std::string histogram_to_svg(const Histogram& h) {
  const int width = 640, height = 360, margin = 40;
  int max_count = 1;
  for (int i = 0; i < h.bins; ++i)
    max_count = std::max({max_count, h.member_counts[i], h.nonmember_counts[i]});

  double plot_w = width - 2.0 * margin;
  double plot_h = height - 2.0 * margin;
  double bar_w = plot_w / h.bins;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto bar = [&](int i, int count, const char* color) {
    if (count == 0) return;
    double x = margin + i * bar_w;
    double bh = plot_h * count / max_count;
    svg << "<rect x=\"" << x << "\" y=\"" << (margin + plot_h - bh) << "\" width=\"" << bar_w
        << "\" height=\"" << bh << "\" fill=\"" << color << "\" fill-opacity=\"0.55\"/>\n";
  };
  for (int i = 0; i < h.bins; ++i) bar(i, h.nonmember_counts[i], "#1f77b4");
  for (int i = 0; i < h.bins; ++i) bar(i, h.member_counts[i], "#ff7f0e");
  svg << "<line x1=\"" << margin << "\" y1=\"" << (margin + plot_h) << "\" x2=\"" << (margin + plot_w)
      << "\" y2=\"" << (margin + plot_h) << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << margin << "\" y=\"" << (height - 10)
      << "\" font-size=\"12\">confidence at true label, 0 to 1 left to right; orange = suspect "
         "members, blue = held-out nodes</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

inline void export_distributions(const DetectionReport& report, const std::string& csv_path,
                                 const std::string& svg_path, int bins = 20) {
  Histogram h = build_histogram(report, bins);
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("export_distributions: cannot open " + csv_path);
  csv << histogram_to_csv(h);
  std::ofstream svg(svg_path, std::ios::binary);
  if (!svg) throw std::runtime_error("export_distributions: cannot open " + svg_path);
  svg << histogram_to_svg(h);
}

}  // namespace graphguard
