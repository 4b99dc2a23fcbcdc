#include "sigma/graph.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "sigma/error.hpp"

namespace sigma {

namespace {
void check_edge(std::size_t n, const AdjacencyGraph::Edge& e) {
  if (e.first >= n || e.second >= n)
    throw ConfigError("graph edge (" + std::to_string(e.first) + ", " + std::to_string(e.second) +
                      ") references a node outside 0.." + std::to_string(n - 1));
  if (e.first == e.second)
    throw ConfigError("graph edge (" + std::to_string(e.first) + ", " + std::to_string(e.second) +
                      ") is a self loop");
}
}  // namespace

AdjacencyGraph::AdjacencyGraph(std::vector<std::vector<std::size_t>> neighbors)
    : neighbors_(std::move(neighbors)) {
  for (std::size_t i = 0; i < neighbors_.size(); ++i) {
    auto& nb = neighbors_[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    if (nb.empty()) throw ConfigError("graph node " + std::to_string(i) + " has no neighbors");
  }
}

AdjacencyGraph AdjacencyGraph::from_undirected_edges(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::vector<std::size_t>> nb(n);
  for (const auto& e : edges) {
    check_edge(n, e);
    nb[e.first].push_back(e.second);
    nb[e.second].push_back(e.first);
  }
  return AdjacencyGraph(std::move(nb));
}

AdjacencyGraph AdjacencyGraph::from_directed_edges(std::size_t n, const std::vector<Edge>& edges) {
  std::set<Edge> seen;
  for (const auto& e : edges) {
    check_edge(n, e);
    seen.insert(e);
  }
  std::vector<std::vector<std::size_t>> nb(n);
  for (const auto& e : seen) {
    if (!seen.contains({e.second, e.first}))
      throw ConfigError("graph is not symmetric: edge (" + std::to_string(e.first) + ", " +
                        std::to_string(e.second) + ") has no reverse entry");
    nb[e.first].push_back(e.second);
  }
  return AdjacencyGraph(std::move(nb));
}

bool AdjacencyGraph::adjacent(std::size_t i, std::size_t j) const {
  const auto& nb = neighbors_.at(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::size_t AdjacencyGraph::edge_count() const {
  std::size_t s = 0;
  for (const auto& nb : neighbors_) s += nb.size();
  return s / 2;
}

std::vector<AdjacencyGraph::Edge> AdjacencyGraph::undirected_edges() const {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < neighbors_.size(); ++i)
    for (auto j : neighbors_[i])
      if (i < j) out.emplace_back(i, j);
  return out;
}

bool AdjacencyGraph::connected() const {
  if (neighbors_.empty()) return true;
  std::vector<bool> seen(neighbors_.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    for (auto j : neighbors_[i])
      if (!seen[j]) {
        seen[j] = true;
        ++count;
        stack.push_back(j);
      }
  }
  return count == neighbors_.size();
}

AdjacencyGraph lattice_graph(std::size_t rows, std::size_t cols) {
  if (rows * cols < 2) throw ConfigError("lattice needs at least two cells");
  std::vector<AdjacencyGraph::Edge> edges;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const auto i = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(i, i + 1);
      if (r + 1 < rows) edges.emplace_back(i, i + cols);
    }
  return AdjacencyGraph::from_undirected_edges(rows * cols, edges);
}

std::vector<std::size_t> lattice_block_labels(std::size_t rows, std::size_t cols,
                                              std::size_t row_blocks, std::size_t col_blocks) {
  if (row_blocks == 0 || col_blocks == 0 || row_blocks > rows || col_blocks > cols)
    throw ConfigError("lattice block split does not fit the lattice");
  std::vector<std::size_t> labels(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const auto br = r * row_blocks / rows;
      const auto bc = c * col_blocks / cols;
      labels[r * cols + c] = br * col_blocks + bc;
    }
  return labels;
}

GraphFile load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed graph file " + path.string() + ": " + e.what());
  }
  try {
    for (const auto& [key, _] : j.items())
      if (key != "n" && key != "edges" && key != "labels")
        throw ConfigError("graph file: unknown key '" + key + "'");
    const auto n = j.at("n").get<std::size_t>();
    std::vector<AdjacencyGraph::Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("graph file: each edge must be [i, j]");
      edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
    GraphFile out{AdjacencyGraph::from_directed_edges(n, edges), std::nullopt};
    if (j.contains("labels")) {
      auto labels = j.at("labels").get<std::vector<std::size_t>>();
      if (labels.size() != n) throw ConfigError("graph file: labels length differs from n");
      out.labels = std::move(labels);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("graph file " + path.string() + ": " + e.what());
  }
}

void save_graph(const std::filesystem::path& path, const AdjacencyGraph& graph,
                const std::optional<std::vector<std::size_t>>& labels) {
  nlohmann::json j;
  j["n"] = graph.size();
  auto edges = nlohmann::json::array();
  for (std::size_t i = 0; i < graph.size(); ++i)
    for (auto k : graph.neighbors(i)) edges.push_back({i, k});
  j["edges"] = std::move(edges);
  if (labels) j["labels"] = *labels;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write graph file " + path.string());
  out << j.dump() << '\n';
}

}  // namespace sigma
