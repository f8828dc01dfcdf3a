#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphguard/graph.hpp"

namespace graphguard {

// Text graph format:
//   nodes=<n> features=<d> classes=<c>
//   features
//   <d space-separated 0/1 digits per node line>
//   labels
//   <one class index or '-' per node line>
//   edges
//   <one "i j" pair per line, 0-indexed>
// UTF-8, LF line endings. Directed or duplicate edge lines are symmetrized
// and collapsed on load; self-loops are rejected.

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace io_detail {

inline bool parse_int(const std::string& s, int& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace io_detail

inline std::string serialize_graph(const Graph& g, bool include_labels = true) {
  std::ostringstream out;
  out << "nodes=" << g.node_count << " features=" << g.feature_dim()
      << " classes=" << g.num_classes << "\n";
  out << "features\n";
  for (int i = 0; i < g.node_count; ++i) {
    for (int j = 0; j < g.feature_dim(); ++j) {
      if (j) out << ' ';
      out << (g.features(i, j) != 0.0 ? '1' : '0');
    }
    out << '\n';
  }
  out << "labels\n";
  for (int i = 0; i < g.node_count; ++i) {
    int y = (include_labels && i < static_cast<int>(g.labels.size())) ? g.labels[i] : -1;
    if (y < 0)
      out << "-\n";
    else
      out << y << '\n';
  }
  out << "edges\n";
  for (auto [i, j] : g.edges) out << i << ' ' << j << '\n';
  return out.str();
}

inline Graph parse_graph(const std::string& text, GraphRole role = GraphRole::OwnerPrivate) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next_line = [&](const char* context) {
    if (!std::getline(in, line)) throw ParseError(lineno + 1, std::string("missing ") + context);
    ++lineno;
  };

  next_line("header");
  int n = -1, d = -1, c = -1;
  {
    std::istringstream hs(line);
    std::string tok;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "malformed header token '" + tok + "'");
      std::string key = tok.substr(0, eq);
      int val;
      if (!io_detail::parse_int(tok.substr(eq + 1), val))
        throw ParseError(lineno, "non-integer header value in '" + tok + "'");
      if (key == "nodes")
        n = val;
      else if (key == "features")
        d = val;
      else if (key == "classes")
        c = val;
      else
        throw ParseError(lineno, "unknown header key '" + key + "'");
    }
  }
  if (n < 0 || d < 0 || c < 0) throw ParseError(1, "header must set nodes, features, classes");

  Graph g;
  g.node_count = n;
  g.num_classes = c;
  g.features = Matrix(n, d);
  g.labels.assign(n, -1);
  g.role = role;

  next_line("'features' section");
  if (line != "features") throw ParseError(lineno, "expected 'features' section");
  for (int i = 0; i < n; ++i) {
    next_line("feature row");
    std::istringstream fs(line);
    std::string tok;
    int j = 0;
    while (fs >> tok) {
      if (j >= d) throw ParseError(lineno, "too many feature values");
      if (tok == "0")
        g.features(i, j) = 0.0;
      else if (tok == "1")
        g.features(i, j) = 1.0;
      else
        throw ParseError(lineno, "feature value '" + tok + "' is not 0 or 1");
      ++j;
    }
    if (j != d) throw ParseError(lineno, "expected " + std::to_string(d) + " feature values");
  }

  next_line("'labels' section");
  if (line != "labels") throw ParseError(lineno, "expected 'labels' section");
  for (int i = 0; i < n; ++i) {
    next_line("label");
    if (line == "-") {
      g.labels[i] = -1;
      continue;
    }
    int y;
    if (!io_detail::parse_int(line, y)) throw ParseError(lineno, "malformed label '" + line + "'");
    if (y < 0 || y >= c) throw ParseError(lineno, "label " + std::to_string(y) + " out of range");
    g.labels[i] = y;
  }

  next_line("'edges' section");
  if (line != "edges") throw ParseError(lineno, "expected 'edges' section");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream es(line);
    std::string a, b, extra;
    if (!(es >> a >> b) || (es >> extra)) throw ParseError(lineno, "malformed edge line");
    int i, j;
    if (!io_detail::parse_int(a, i) || !io_detail::parse_int(b, j))
      throw ParseError(lineno, "malformed edge endpoints");
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw ParseError(lineno, "edge endpoint out of range");
    if (i == j) throw ParseError(lineno, "self-loop not allowed");
    g.edges.push_back({i, j});
  }
  canonicalize_edges(g.edges);
  return g;
}

inline void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_graph: cannot open " + path);
  out << serialize_graph(g);
  if (!out) throw std::runtime_error("save_graph: write failed for " + path);
}

inline Graph load_graph(const std::string& path, GraphRole role = GraphRole::OwnerPrivate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_graph: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_graph(buf.str(), role);
}

}  // namespace graphguard
