#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace sigma {

/// Symmetric neighbor structure of a set of regions. Every region must have
/// at least one neighbor.
class AdjacencyGraph {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  AdjacencyGraph() = default;

  /// Each pair is added in both directions. Duplicate pairs are ignored.
  static AdjacencyGraph from_undirected_edges(std::size_t n, const std::vector<Edge>& edges);
  /// Pairs are directed entries W_ij = 1. Any (i, j) without a matching
  /// (j, i) is rejected.
  static AdjacencyGraph from_directed_edges(std::size_t n, const std::vector<Edge>& edges);

  std::size_t size() const noexcept { return neighbors_.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  std::size_t degree(std::size_t i) const { return neighbors_.at(i).size(); }
  bool adjacent(std::size_t i, std::size_t j) const;
  std::size_t edge_count() const;
  /// Undirected edges with i < j, in increasing order.
  std::vector<Edge> undirected_edges() const;
  bool connected() const;

 private:
  explicit AdjacencyGraph(std::vector<std::vector<std::size_t>> neighbors);
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Rook-adjacency lattice; node index is r * cols + c.
AdjacencyGraph lattice_graph(std::size_t rows, std::size_t cols);

/// Client labels splitting a lattice into a row_blocks x col_blocks grid of
/// contiguous rectangles (2 x 2 gives quadrants).
std::vector<std::size_t> lattice_block_labels(std::size_t rows, std::size_t cols,
                                              std::size_t row_blocks, std::size_t col_blocks);

struct GraphFile {
  AdjacencyGraph graph;
  std::optional<std::vector<std::size_t>> labels;
};

/// JSON: {"n": int, "edges": [[i, j], ...], "labels": [int, ...]?}. Edges are
/// 0-based and must list both directions.
GraphFile load_graph(const std::filesystem::path& path);
void save_graph(const std::filesystem::path& path, const AdjacencyGraph& graph,
                const std::optional<std::vector<std::size_t>>& labels = std::nullopt);

}  // namespace sigma
