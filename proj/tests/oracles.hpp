#pragma once

// Brute-force reference computations used as test oracles. Deliberately
// written without reusing library code.

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace vkg::oracle {

inline double partition_inertia(const std::vector<std::vector<double>>& pts, const std::vector<int>& labels, int k) {
  const std::size_t dim = pts[0].size();
  std::vector<std::vector<double>> sum(k, std::vector<double>(dim, 0.0));
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) sum[labels[i]][d] += pts[i][d];
    ++count[labels[i]];
  }
  double total = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = sum[labels[i]][d] / count[labels[i]];
      total += (pts[i][d] - c) * (pts[i][d] - c);
    }
  }
  return total;
}

/// Minimum inertia over every partition of the points into exactly k
/// non-empty blocks (restricted growth strings).
inline double optimal_inertia(const std::vector<std::vector<double>>& pts, int k) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> labels(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int)> rec = [&](int i, int used) {
    if (n - i < k - used) return;
    if (i == n) {
      if (used == k) best = std::min(best, partition_inertia(pts, labels, k));
      return;
    }
    for (int l = 0; l <= std::min(used, k - 1); ++l) {
      labels[i] = l;
      rec(i + 1, std::max(used, l + 1));
    }
  };
  rec(0, 0);
  return best;
}

/// Laplacian responses enumerated pixel by pixel on a gray raster.
inline double laplacian_variance(const std::vector<std::uint8_t>& gray, int w, int h) {
  std::vector<double> r;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      auto px = [&](int xx, int yy) { return static_cast<double>(gray[yy * w + xx]); };
      r.push_back(px(x, y - 1) + px(x, y + 1) + px(x - 1, y) + px(x + 1, y) - 4 * px(x, y));
    }
  }
  double mean = 0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double var = 0;
  for (double v : r) var += (v - mean) * (v - mean);
  return var / static_cast<double>(r.size());
}

}  // namespace vkg::oracle
