#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vkg/image.hpp"
#include "vkg/pipeline.hpp"
#include "vkg/window.hpp"

namespace vkg {

struct HistogramVector {
  std::array<double, 256> bins{};
  FrameRef source;
  bool normalized = false;
};

/// 256-bin gray-level counts; RGB goes through luma(). Throws zero-area-image.
HistogramVector gray_histogram(const ImageBuffer& image);
/// L1-normalized copy (bins sum to 1).
HistogramVector normalize(HistogramVector h);

using Point = std::vector<double>;

struct ClusteringResult {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  std::vector<Point> centroids;
  double inertia = 0.0;
  /// Inertia after each Lloyd update of the winning restart.
  std::vector<double> inertia_trace;
  friend bool operator==(const ClusteringResult&, const ClusteringResult&) = default;
};

struct KMeansOptions {
  int max_iters = 300;
  std::uint64_t seed = 0;
  int restarts = 5;
};

double squared_distance(const Point& a, const Point& b);
double inertia_of(const std::vector<Point>& points, const std::vector<std::size_t>& assignments,
                  const std::vector<Point>& centroids);

/// k-means++ seeding then Lloyd until the assignment is a fixpoint or max_iters.
/// Each fixpoint is refined by single-point transfers that lower the inertia,
/// and Lloyd resumes after any move. Best of `restarts` seeded runs. Throws invalid-k unless 1 <= k <= n.
ClusteringResult kmeans(const std::vector<Point>& points, std::size_t k, const KMeansOptions& options = {});

struct KChoice {
  std::size_t chosen_k = 1;
  std::vector<std::pair<std::size_t, double>> curve;
  /// Clustering at each evaluated k, aligned with `curve`.
  std::vector<ClusteringResult> clusterings;
};

/// argmin over k in [k_min, k_max] of inertia(k)/inertia(1) + alpha*k, ties to smaller k.
KChoice choose_k(const std::vector<Point>& points, std::size_t k_min, std::size_t k_max, double alpha,
                 const KMeansOptions& options = {});

/// Population variance of the 4-neighbour Laplacian over interior pixels.
/// Throws image-too-small below 3x3.
double laplacian_variance(const ImageBuffer& image);

struct KeyframeConfig {
  double alpha = 0.02;
  std::size_t k_min = 1;  // lowered to the frame count when fewer frames exist
  std::size_t k_max = 25;
  KMeansOptions kmeans;
};

KeyframeSelection select_keyframes(const DataWindow& window, const KeyframeConfig& config = {});

/// Writes "keyframes". A window without frames gets an empty selection.
Pipe keyframe_pipe(KeyframeConfig config = {});

}  // namespace vkg
