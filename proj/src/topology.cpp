#include "ccbf/topology.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace ccbf {

CouplingGraph::CouplingGraph(int n, const std::vector<std::pair<int, int>>& edges)
    : n_(n), edges_(edges) {
  if (n <= 0) throw std::invalid_argument("graph needs at least one agent");
  std::set<std::pair<int, int>> seen;
  for (const auto& [i, j] : edges_) {
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw std::invalid_argument("edge (" + std::to_string(i + 1) + ", " +
                                  std::to_string(j + 1) + ") out of range");
    if (!seen.insert({i, j}).second)
      throw std::invalid_argument("duplicate edge (" + std::to_string(i + 1) +
                                  ", " + std::to_string(j + 1) + ")");
  }
  for (int i = 0; i < n; ++i) {
    if (!seen.count({i, i}))
      throw std::invalid_argument("missing self-loop for agent " +
                                  std::to_string(i + 1));
  }
  in_.resize(n);
  out_.resize(n);
  both_.resize(n);
  for (const auto& [i, j] : edges_) {
    in_[i].push_back(j);
    out_[j].push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    std::sort(in_[i].begin(), in_[i].end());
    std::sort(out_[i].begin(), out_[i].end());
    std::set<int> u(in_[i].begin(), in_[i].end());
    u.insert(out_[i].begin(), out_[i].end());
    both_[i].assign(u.begin(), u.end());
  }
}

CouplingGraph CouplingGraph::complete(int n) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) edges.emplace_back(i, j);
  return CouplingGraph(n, edges);
}

void CouplingGraph::check_index(int i) const {
  if (i < 0 || i >= n_)
    throw std::out_of_range("agent index " + std::to_string(i + 1) +
                            " out of range [1, " + std::to_string(n_) + "]");
}

bool CouplingGraph::has_edge(int i, int j) const {
  check_index(i);
  check_index(j);
  return std::binary_search(in_[i].begin(), in_[i].end(), j);
}

const std::vector<int>& CouplingGraph::in_neighbors(int i) const {
  check_index(i);
  return in_[i];
}

const std::vector<int>& CouplingGraph::out_neighbors(int i) const {
  check_index(i);
  return out_[i];
}

const std::vector<int>& CouplingGraph::neighbors(int i) const {
  check_index(i);
  return both_[i];
}

std::vector<int> CouplingGraph::two_hop(int i) const {
  check_index(i);
  std::set<int> u;
  for (int j : both_[i]) u.insert(both_[j].begin(), both_[j].end());
  return {u.begin(), u.end()};
}

bool CouplingGraph::is_symmetric() const {
  for (const auto& [i, j] : edges_)
    if (!has_edge(j, i)) return false;
  return true;
}

}  // namespace ccbf
