#pragma once

#include <utility>
#include <vector>

namespace ccbf {

/// Directed coupling graph over agents 0..n-1. An edge (i, j) means agent
/// j's state enters agent i's drift. Every node carries a self-loop.
/// Immutable after construction; safe for concurrent reads.
class CouplingGraph {
 public:
  /// Builds from an explicit edge list. Requires all indices in [0, n),
  /// a self-loop (i, i) for every node, and no duplicate edges.
  CouplingGraph(int n, const std::vector<std::pair<int, int>>& edges);

  /// All-to-all coupling (self-loops included).
  static CouplingGraph complete(int n);

  int size() const { return n_; }

  bool has_edge(int i, int j) const;

  /// In-neighbors of i: all j whose state enters i's drift. Sorted
  /// ascending, always contains i.
  const std::vector<int>& in_neighbors(int i) const;

  /// Out-neighbors of i: all j whose drift depends on i's state. Sorted
  /// ascending, always contains i.
  const std::vector<int>& out_neighbors(int i) const;

  /// Union of in- and out-neighbors, sorted.
  const std::vector<int>& neighbors(int i) const;

  /// Union of neighbors(j) over all j in neighbors(i), sorted. This is the
  /// communication footprint one agent needs for constraint assembly.
  std::vector<int> two_hop(int i) const;

  /// True when every edge (i, j) has a matching (j, i).
  bool is_symmetric() const;

  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

 private:
  void check_index(int i) const;

  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> in_;
  std::vector<std::vector<int>> out_;
  std::vector<std::vector<int>> both_;
};

}  // namespace ccbf
