#include "vkg/keyframes.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "vkg/error.hpp"

namespace vkg {

HistogramVector gray_histogram(const ImageBuffer& image) {
  if (image.width() <= 0 || image.height() <= 0 || image.empty()) {
    throw Error("zero-area-image", "cannot histogram an empty image");
  }
  HistogramVector h;
  h.source = image.source();
  const auto px = image.pixels();
  if (image.channels() == 1) {
    for (auto v : px) h.bins[v] += 1.0;
  } else {
    for (std::size_t i = 0; i + 2 < px.size(); i += 3) h.bins[luma(px[i], px[i + 1], px[i + 2])] += 1.0;
  }
  return h;
}

HistogramVector normalize(HistogramVector h) {
  if (h.normalized) return h;
  const double total = std::accumulate(h.bins.begin(), h.bins.end(), 0.0);
  if (total > 0) {
    for (auto& b : h.bins) b /= total;
  }
  h.normalized = true;
  return h;
}

double squared_distance(const Point& a, const Point& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

double inertia_of(const std::vector<Point>& points, const std::vector<std::size_t>& assignments,
                  const std::vector<Point>& centroids) {
  double total = 0;
  for (std::size_t i = 0; i < points.size(); ++i) total += squared_distance(points[i], centroids[assignments[i]]);
  return total;
}

namespace {

std::size_t nearest(const Point& p, const std::vector<Point>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Point> seed_plus_plus(const std::vector<Point>& points, std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = points.size();
  std::vector<Point> centroids;
  centroids.push_back(points[std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n)))]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total <= 0) {
      pick = std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n)));
    } else {
      const double r = unit(rng) * total;
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

std::vector<Point> means(const std::vector<Point>& points, const std::vector<std::size_t>& assignments,
                         std::size_t k) {
  const std::size_t dim = points.front().size();
  std::vector<Point> sums(k, Point(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& s = sums[assignments[i]];
    for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
    ++counts[assignments[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

/// Moves the farthest member of the largest cluster into each empty cluster.
void repair_empty(const std::vector<Point>& points, std::vector<std::size_t>& assignments,
                  std::vector<Point>& centroids) {
  const std::size_t k = centroids.size();
  while (true) {
    std::vector<std::size_t> counts(k, 0);
    for (auto a : assignments) ++counts[a];
    const auto empty = std::find(counts.begin(), counts.end(), 0U);
    if (empty == counts.end()) return;
    const auto largest = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::size_t far = 0;
    double far_d = -1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (assignments[i] != largest) continue;
      const double d = squared_distance(points[i], centroids[largest]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    const auto target = static_cast<std::size_t>(empty - counts.begin());
    assignments[far] = target;
    centroids[target] = points[far];
    centroids[largest] = means(points, assignments, k)[largest];
  }
}

/// One sweep of single-point transfers that each lower the inertia. Returns
/// whether any point moved.
bool transfer_pass(const std::vector<Point>& points, std::vector<std::size_t>& assignments,
                   std::vector<Point>& centroids) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignments) ++counts[a];
  bool moved = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto from = assignments[i];
    if (counts[from] < 2) continue;
    const double na = static_cast<double>(counts[from]);
    const double leave = na / (na - 1.0) * squared_distance(points[i], centroids[from]);
    std::size_t to = from;
    double best = leave;
    for (std::size_t c = 0; c < k; ++c) {
      if (c == from) continue;
      const double nb = static_cast<double>(counts[c]);
      const double join = nb / (nb + 1.0) * squared_distance(points[i], centroids[c]);
      if (join < best - 1e-12 * (1.0 + leave)) {
        best = join;
        to = c;
      }
    }
    if (to == from) continue;
    assignments[i] = to;
    --counts[from];
    ++counts[to];
    centroids = means(points, assignments, k);
    moved = true;
  }
  return moved;
}

ClusteringResult lloyd(const std::vector<Point>& points, std::size_t k, int max_iters, std::mt19937_64& rng) {
  ClusteringResult r;
  r.k = k;
  r.centroids = seed_plus_plus(points, k, rng);
  r.assignments.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) r.assignments[i] = nearest(points[i], r.centroids);
  repair_empty(points, r.assignments, r.centroids);
  int it = 0;
  while (it < max_iters) {
    for (; it < max_iters; ++it) {
      r.centroids = means(points, r.assignments, k);
      r.inertia_trace.push_back(inertia_of(points, r.assignments, r.centroids));
      auto next = r.assignments;
      for (std::size_t i = 0; i < points.size(); ++i) {
        // Keep the current cluster on ties so the fixpoint test terminates.
        const auto c = nearest(points[i], r.centroids);
        if (squared_distance(points[i], r.centroids[c]) < squared_distance(points[i], r.centroids[next[i]])) {
          next[i] = c;
        }
      }
      repair_empty(points, next, r.centroids);
      if (next == r.assignments) break;
      r.assignments = std::move(next);
    }
    r.centroids = means(points, r.assignments, k);
    if (it >= max_iters || !transfer_pass(points, r.assignments, r.centroids)) break;
    ++it;
  }
  r.centroids = means(points, r.assignments, k);
  r.inertia = inertia_of(points, r.assignments, r.centroids);
  return r;
}

}  // namespace

ClusteringResult kmeans(const std::vector<Point>& points, std::size_t k, const KMeansOptions& options) {
  if (k < 1 || k > points.size()) {
    throw Error("invalid-k", "k=" + std::to_string(k) + " with n=" + std::to_string(points.size()));
  }
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error("invalid-points", "points differ in dimension");
  }
  std::optional<ClusteringResult> best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    auto result = lloyd(points, k, options.max_iters, rng);
    if (!best || result.inertia < best->inertia) best = std::move(result);
  }
  return *best;
}

KChoice choose_k(const std::vector<Point>& points, std::size_t k_min, std::size_t k_max, double alpha,
                 const KMeansOptions& options) {
  if (points.empty()) throw Error("invalid-k", "no points to cluster");
  if (k_min < 1 || k_max < k_min || k_max > points.size()) {
    throw Error("invalid-k", "k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) + "] with n=" +
                                 std::to_string(points.size()));
  }
  if (!(alpha > 0)) throw Error("invalid-config", "alpha must be positive");
  KChoice out;
  const auto one = kmeans(points, 1, options);
  if (one.inertia <= 0) {
    out.chosen_k = 1;
    out.curve.emplace_back(1, alpha);
    out.clusterings.push_back(one);
    return out;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    auto c = k == 1 ? one : kmeans(points, k, options);
    const double value = c.inertia / one.inertia + alpha * static_cast<double>(k);
    out.curve.emplace_back(k, value);
    if (value < best) {
      best = value;
      out.chosen_k = k;
    }
    out.clusterings.push_back(std::move(c));
  }
  return out;
}

double laplacian_variance(const ImageBuffer& image) {
  const ImageBuffer gray = image.channels() == 1 ? image : to_gray(image);
  const int w = gray.width();
  const int h = gray.height();
  if (w < 3 || h < 3) throw Error("image-too-small", "Laplacian needs at least 3x3 pixels");
  std::vector<double> responses;
  responses.reserve(static_cast<std::size_t>(w - 2) * static_cast<std::size_t>(h - 2));
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      responses.push_back(static_cast<double>(gray.at(x, y - 1)) + gray.at(x - 1, y) + gray.at(x + 1, y) +
                          gray.at(x, y + 1) - 4.0 * gray.at(x, y));
    }
  }
  const double n = static_cast<double>(responses.size());
  const double mean = std::accumulate(responses.begin(), responses.end(), 0.0) / n;
  double var = 0;
  for (double r : responses) var += (r - mean) * (r - mean);
  return var / n;
}

KeyframeSelection select_keyframes(const DataWindow& window, const KeyframeConfig& config) {
  KeyframeSelection out;
  const auto& frames = window.frames();
  if (frames.empty()) return out;

  std::vector<Point> points;
  std::vector<double> sharpness;
  points.reserve(frames.size());
  for (const auto& f : frames) {
    const auto image = f.image.load();
    if (!image) throw Error("missing-pixels", "frame has no image", window.window_id());
    const auto h = normalize(gray_histogram(*image));
    points.emplace_back(h.bins.begin(), h.bins.end());
    sharpness.push_back(laplacian_variance(*image));
  }

  const std::size_t k_max = std::max<std::size_t>(1, std::min(config.k_max, points.size()));
  const std::size_t k_min = std::clamp<std::size_t>(config.k_min, 1, k_max);
  auto choice = choose_k(points, k_min, k_max, config.alpha, config.kmeans);
  out.chosen_k = choice.chosen_k;
  out.scaled_inertia_curve = choice.curve;
  const auto& clustering = *std::find_if(choice.clusterings.begin(), choice.clusterings.end(),
                                         [&](const auto& c) { return c.k == choice.chosen_k; });

  // Relabel clusters by first appearance so labels do not depend on seeding.
  std::vector<std::size_t> label(clustering.k, clustering.k);
  std::size_t next_label = 0;
  for (auto a : clustering.assignments) {
    if (label[a] == clustering.k) label[a] = next_label++;
  }
  std::vector<std::optional<std::size_t>> pick(clustering.k);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto& p = pick[label[clustering.assignments[i]]];
    if (!p || sharpness[i] > sharpness[*p]) p = i;  // frames are ordered, so ties keep the smaller index
  }
  for (std::size_t c = 0; c < pick.size(); ++c) {
    if (pick[c]) out.keyframes.push_back(Keyframe{frames[*pick[c]].ref, sharpness[*pick[c]], c});
  }
  std::sort(out.keyframes.begin(), out.keyframes.end(),
            [](const Keyframe& a, const Keyframe& b) { return a.frame.frame_index < b.frame.frame_index; });
  return out;
}

Pipe keyframe_pipe(KeyframeConfig config) {
  Pipe p;
  p.name = "keyframes";
  p.writes = {"keyframes"};
  p.transform = [config](DataWindow w) {
    auto selection = select_keyframes(w, config);
    return std::move(w).with_slot(make_slot("keyframes", std::move(selection), "keyframes"));
  };
  return p;
}

}  // namespace vkg
