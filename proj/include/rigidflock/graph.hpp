#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "linalg.hpp"

namespace rigidflock {

using Edge = std::pair<std::size_t, std::size_t>;

/// Directed observation graph: edge (i, j) means agent i observes agent j.
/// Edges are kept sorted lexicographically; all stacked objects use that order.
class ObservationGraph {
 public:
  ObservationGraph() = default;

  explicit ObservationGraph(std::size_t n, const std::vector<Edge>& edges = {}) : n_(n) {
    for (const auto& e : edges) {
      add_edge(e.first, e.second);
    }
  }

  static ObservationGraph complete(std::size_t n) {
    ObservationGraph g(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) {
          g.add_edge(i, j);
        }
      }
    }
    return g;
  }

  void add_edge(std::size_t i, std::size_t j) {
    if (i == j) {
      throw std::invalid_argument("graph: self-loop on agent " + std::to_string(i));
    }
    if (i >= n_ || j >= n_) {
      throw std::invalid_argument("graph: edge index out of range");
    }
    const Edge e{i, j};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
    if (it == edges_.end() || *it != e) {
      edges_.insert(it, e);
    }
  }

  void remove_edge(std::size_t i, std::size_t j) {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{i, j});
    if (it != edges_.end() && *it == Edge{i, j}) {
      edges_.erase(it);
    }
  }

  bool has_edge(std::size_t i, std::size_t j) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{i, j});
  }

  std::size_t size() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::vector<std::size_t> out_neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (const auto& [a, b] : edges_) {
      if (a == i) {
        out.push_back(b);
      }
    }
    return out;
  }

  /// Unordered vertex pairs joined by at least one direction, sorted.
  std::vector<Edge> undirected_pairs() const {
    std::set<Edge> s;
    for (const auto& [a, b] : edges_) {
      s.insert({std::min(a, b), std::max(a, b)});
    }
    return {s.begin(), s.end()};
  }

  friend bool operator==(const ObservationGraph&, const ObservationGraph&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
};

inline bool is_connected(const ObservationGraph& g) {
  const std::size_t n = g.size();
  if (n <= 1) {
    return true;
  }
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) {
    parent[i] = i;
  }
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::size_t components = n;
  for (const auto& [a, b] : g.edges()) {
    const std::size_t ra = find(a);
    const std::size_t rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components == 1;
}

/// Vertices that are observed but observe nobody.
inline std::size_t count_passive_sinks(const ObservationGraph& g) {
  std::vector<int> in(g.size(), 0);
  std::vector<int> out(g.size(), 0);
  for (const auto& [a, b] : g.edges()) {
    ++out[a];
    ++in[b];
  }
  std::size_t sinks = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (in[i] > 0 && out[i] == 0) {
      ++sinks;
    }
  }
  return sinks;
}

/// Unit-weight Laplacian of the undirected underlying graph.
inline Eigen::MatrixXd undirected_laplacian(const ObservationGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [a, b] : g.undirected_pairs()) {
    const auto i = static_cast<Eigen::Index>(a);
    const auto j = static_cast<Eigen::Index>(b);
    l(i, j) -= 1.0;
    l(j, i) -= 1.0;
    l(i, i) += 1.0;
    l(j, j) += 1.0;
  }
  return l;
}

/// Algebraic connectivity: second-smallest Laplacian eigenvalue.
inline double fiedler_value(const ObservationGraph& g) {
  if (g.size() < 2) {
    throw std::domain_error("fiedler_value: need at least two agents");
  }
  const double lambda = symmetric_eigen(undirected_laplacian(g)).values[1];
  // Eigenvalues of a Laplacian are nonnegative; clean rounding residue so that
  // a disconnected graph reports exactly zero.
  return lambda < 1e-9 ? 0.0 : lambda;
}

/// Removes floor(fraction * pairs) undirected observation pairs (both
/// directions at once) in a seeded random order, skipping any pair whose
/// removal would disconnect the graph.
template <class Rng>
ObservationGraph remove_random_edges_keep_connected(const ObservationGraph& g, double fraction,
                                                    Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("remove_random_edges_keep_connected: fraction outside [0, 1]");
  }
  if (!is_connected(g)) {
    throw std::invalid_argument("remove_random_edges_keep_connected: graph is disconnected");
  }
  std::vector<Edge> pairs = g.undirected_pairs();
  const auto target = static_cast<std::size_t>(fraction * static_cast<double>(pairs.size()));
  // Fisher-Yates with explicit draws keeps the order identical across standard libraries.
  for (std::size_t i = pairs.size(); i > 1; --i) {
    const std::size_t k = static_cast<std::size_t>(rng() % i);
    std::swap(pairs[i - 1], pairs[k]);
  }

  ObservationGraph out = g;
  std::size_t removed = 0;
  for (const auto& [a, b] : pairs) {
    if (removed == target) {
      break;
    }
    ObservationGraph trial = out;
    trial.remove_edge(a, b);
    trial.remove_edge(b, a);
    if (is_connected(trial)) {
      out = std::move(trial);
      ++removed;
    }
  }
  return out;
}

}  // namespace rigidflock
