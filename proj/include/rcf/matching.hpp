#pragma once

// Correspondence between predicted and ground-truth boundary pixels:
// maximum-cardinality matching (Hopcroft-Karp) on the bipartite graph that
// links every predicted pixel to every ground-truth pixel within a Euclidean
// radius.

#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

// Adjacency lists for a bipartite graph with `left` and `right` vertices.
class BipartiteGraph {
 public:
  BipartiteGraph(std::size_t left, std::size_t right) : adj_(left), right_(right) {}

  void add_edge(std::size_t l, std::size_t r) { adj_[l].push_back(static_cast<int>(r)); }
  std::size_t left() const { return adj_.size(); }
  std::size_t right() const { return right_; }
  const std::vector<int>& neighbours(std::size_t l) const { return adj_[l]; }

 private:
  std::vector<std::vector<int>> adj_;
  std::size_t right_;
};

struct Matching {
  std::vector<int> left_to_right;  // -1 if unmatched
  std::vector<int> right_to_left;
  std::size_t size = 0;
};

inline Matching hopcroft_karp(const BipartiteGraph& g) {
  constexpr int kInf = std::numeric_limits<int>::max();
  const std::size_t nl = g.left();
  Matching m{std::vector<int>(nl, -1), std::vector<int>(g.right(), -1), 0};
  std::vector<int> dist(nl);

  auto bfs = [&]() {
    std::queue<int> q;
    bool found = false;
    for (std::size_t l = 0; l < nl; ++l) {
      if (m.left_to_right[l] < 0) {
        dist[l] = 0;
        q.push(static_cast<int>(l));
      } else {
        dist[l] = kInf;
      }
    }
    while (!q.empty()) {
      const int l = q.front();
      q.pop();
      for (int r : g.neighbours(static_cast<std::size_t>(l))) {
        const int next = m.right_to_left[r];
        if (next < 0) {
          found = true;
        } else if (dist[next] == kInf) {
          dist[next] = dist[l] + 1;
          q.push(next);
        }
      }
    }
    return found;
  };

  // Iterative DFS along layered edges; it[l] remembers the next edge to try.
  std::vector<std::size_t> it(nl);
  auto dfs = [&](int root) {
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int l = stack.back();
      const auto& nb = g.neighbours(static_cast<std::size_t>(l));
      bool advanced = false;
      while (it[l] < nb.size()) {
        const int r = nb[it[l]];
        const int next = m.right_to_left[r];
        if (next < 0) {
          // augment along the stack
          for (std::size_t k = stack.size(); k-- > 0;) {
            const int lv = stack[k];
            const int rv = g.neighbours(static_cast<std::size_t>(lv))[it[lv]];
            m.left_to_right[lv] = rv;
            m.right_to_left[rv] = lv;
          }
          return true;
        }
        if (dist[next] == dist[l] + 1) {
          stack.push_back(next);
          advanced = true;
          break;
        }
        ++it[l];
      }
      if (!advanced) {
        dist[l] = kInf;
        stack.pop_back();
        if (!stack.empty()) ++it[stack.back()];
      }
    }
    return false;
  };

  while (bfs()) {
    std::fill(it.begin(), it.end(), 0);
    for (std::size_t l = 0; l < nl; ++l) {
      if (m.left_to_right[l] < 0 && dfs(static_cast<int>(l))) ++m.size;
    }
  }
  return m;
}

struct MatchResult {
  std::size_t matched_pred = 0;
  std::size_t matched_gt = 0;
  std::vector<std::uint8_t> pred_matched;  // per pixel, 1 if a matched pred pixel
};

// pred and gt are binary (nonzero = edge) maps of identical shape.
template <typename T>
MatchResult match_boundaries(const Tensor<T>& pred, const Tensor<T>& gt, double radius) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(detail::concat("match_boundaries: pred ", pred.shape().str(), " vs gt ",
                                    gt.shape().str()));
  }
  if (radius < 0) throw ArgumentError("match_boundaries: radius must be non-negative");
  const std::size_t h = pred.shape().h, w = pred.shape().w;
  const std::size_t n = pred.size();

  std::vector<int> gt_index(n, -1);
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (gt[i] != T{0}) gt_index[i] = static_cast<int>(n_gt++);
  }
  std::vector<std::size_t> pred_pixels;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred[i] != T{0}) pred_pixels.push_back(i);
  }

  const long r = static_cast<long>(std::floor(radius));
  std::vector<std::pair<long, long>> offsets;
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      if (static_cast<double>(dy * dy + dx * dx) <= radius * radius) offsets.emplace_back(dy, dx);
    }
  }

  BipartiteGraph g(pred_pixels.size(), n_gt);
  for (std::size_t p = 0; p < pred_pixels.size(); ++p) {
    const long y = static_cast<long>(pred_pixels[p] / w);
    const long x = static_cast<long>(pred_pixels[p] % w);
    for (const auto& [dy, dx] : offsets) {
      const long yy = y + dy, xx = x + dx;
      if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
      const int gi = gt_index[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
      if (gi >= 0) g.add_edge(p, static_cast<std::size_t>(gi));
    }
  }
  const Matching m = hopcroft_karp(g);
  MatchResult res;
  res.matched_pred = m.size;
  res.matched_gt = m.size;
  res.pred_matched.assign(n, 0);
  for (std::size_t p = 0; p < pred_pixels.size(); ++p) {
    if (m.left_to_right[p] >= 0) res.pred_matched[pred_pixels[p]] = 1;
  }
  return res;
}

}  // namespace rcf
