#pragma once

// Brute-force DBSCAN: core flags from the full distance matrix, union-find over
// core-core edges, borders to the adjacent cluster with the lowest first core.

#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "m2slt/numkit.hpp"

namespace oracle {

inline std::vector<int> dbscan_reference(const m2slt::Matrix& pts, double eps, std::size_t min_pts) {
  const std::size_t n = pts.rows();
  std::vector<std::vector<bool>> near(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < pts.cols(); ++c) d += (pts(i, c) - pts(j, c)) * (pts(i, c) - pts(j, c));
      near[i][j] = std::sqrt(d) <= eps;
    }
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < n; ++j) cnt += near[i][j];
    core[i] = cnt >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (core[i] && core[j] && near[i][j]) {
        const std::size_t a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
  // Number clusters by their lowest core index.
  std::map<std::size_t, int> ids;
  std::vector<int> labels(n, -1);
  for (std::size_t i = 0; i < n; ++i)
    if (core[i]) {
      const std::size_t root = find(i);
      auto it = ids.find(root);
      if (it == ids.end()) it = ids.emplace(root, static_cast<int>(ids.size())).first;
      labels[i] = it->second;
    }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && near[i][j] && (best < 0 || labels[j] < best)) best = labels[j];
    labels[i] = best;
  }
  return labels;
}

// Same partition up to renumbering, noise matched exactly.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    auto [x, fresh_x] = ab.emplace(a[i], b[i]);
    auto [y, fresh_y] = ba.emplace(b[i], a[i]);
    if (x->second != b[i] || y->second != a[i]) return false;
  }
  return true;
}

}  // namespace oracle
