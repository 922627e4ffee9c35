#include "vkg/continual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <tuple>
#include <sstream>

#include "vkg/adapters.hpp"
#include "vkg/error.hpp"
#include "vkg/hash.hpp"
#include "vkg/keyframes.hpp"
#include "vkg/text.hpp"

namespace vkg {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double sigmoid(double m) {
  if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

/// log(1 + exp(-z)) without overflow.
double softplus_neg(double z) { return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Solves H d = g for the logistic Hessian over (w, b) by Cholesky.
/// Returns g itself when the factorization breaks down.
std::vector<double> newton_direction(const std::vector<double>& w, double b, const std::vector<std::vector<double>>& xs,
                                     double lambda, const std::vector<double>& g) {
  const std::size_t d = w.size();
  const std::size_t m = d + 1;
  const double n = static_cast<double>(xs.size());
  std::vector<double> h(m * m, 0.0);
  for (const auto& x : xs) {
    const double p = sigmoid(dot(w, x) + b);
    const double s = p * (1.0 - p) / n;
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = i < d ? x[i] : 1.0;
      for (std::size_t j = 0; j <= i; ++j) h[i * m + j] += s * xi * (j < d ? x[j] : 1.0);
    }
  }
  for (std::size_t i = 0; i < d; ++i) h[i * m + i] += 2.0 * lambda;
  for (std::size_t i = 0; i < m; ++i) h[i * m + i] += 1e-10;
  for (std::size_t j = 0; j < m; ++j) {
    double diag = h[j * m + j];
    for (std::size_t k = 0; k < j; ++k) diag -= h[j * m + k] * h[j * m + k];
    if (!(diag > 0.0)) return g;
    h[j * m + j] = std::sqrt(diag);
    for (std::size_t i = j + 1; i < m; ++i) {
      double v = h[i * m + j];
      for (std::size_t k = 0; k < j; ++k) v -= h[i * m + k] * h[j * m + k];
      h[i * m + j] = v / h[j * m + j];
    }
  }
  std::vector<double> y(m);
  for (std::size_t i = 0; i < m; ++i) {
    double v = g[i];
    for (std::size_t k = 0; k < i; ++k) v -= h[i * m + k] * y[k];
    y[i] = v / h[i * m + i];
  }
  for (std::size_t i = m; i-- > 0;) {
    double v = y[i];
    for (std::size_t k = i + 1; k < m; ++k) v -= h[k * m + i] * y[k];
    y[i] = v / h[i * m + i];
  }
  return y;
}

}  // namespace

// ---- candidates --------------------------------------------------------------

std::string candidate_key(const FrameRef& frame, const Box& box) {
  return frame.video_id + "/w" + std::to_string(frame.window_index) + "/f" + std::to_string(frame.frame_index) + "/" +
         fmt17(box.x0) + "," + fmt17(box.y0) + "," + fmt17(box.x1) + "," + fmt17(box.y1);
}

std::vector<Candidate> collect_candidates(const std::string& parent, const StoreSnapshot& snapshot, std::size_t limit) {
  std::vector<Candidate> out;
  bool seen = false;
  for (const auto& [video_id, gv] : snapshot) {
    const auto* node = gv.graph->find(parent);
    if (node == nullptr) continue;
    seen = true;
    for (const auto& [key, info] : node->evidence) {
      const FrameRef ref{video_id, key.window, key.frame, info.timestamp};
      if (info.boxes.empty()) {
        out.push_back(Candidate{ref, Box::whole(), candidate_key(ref, Box::whole())});
      }
      for (const auto& b : info.boxes) out.push_back(Candidate{ref, b, candidate_key(ref, b)});
    }
  }
  if (!seen) throw Error("parent-unseen", "no graph holds " + parent, parent);
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.frame.video_id, a.frame.frame_index, a.frame.window_index, a.box) <
           std::tie(b.frame.video_id, b.frame.frame_index, b.frame.window_index, b.box);
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Candidate& a, const Candidate& b) {
                          return a.frame.video_id == b.frame.video_id && a.frame.frame_index == b.frame.frame_index &&
                                 a.box == b.box;
                        }),
            out.end());
  if (out.size() > limit) out.resize(limit);
  return out;
}

std::vector<double> default_features(const ImageBuffer& crop, const Box& box) {
  std::vector<double> f;
  f.reserve(kDefaultFeatureDim);
  const auto hist = normalize(gray_histogram(crop));
  f.insert(f.end(), hist.bins.begin(), hist.bins.end());
  const double lap = crop.width() >= 3 && crop.height() >= 3 ? laplacian_variance(crop) : 0.0;
  f.push_back(std::log1p(lap));
  const double w = box.x1 - box.x0;
  const double h = box.y1 - box.y0;
  f.push_back(w);
  f.push_back(h);
  f.push_back(std::log(w / h));
  return f;
}

std::vector<double> candidate_features(const ImageBuffer& frame, const Box& box, const FeatureExtractor& extractor) {
  auto rect = padded_rect(box, frame.width(), frame.height(), 0.0);
  if (rect.x1 <= rect.x0) rect.x1 = std::min(frame.width(), rect.x0 + 1), rect.x0 = rect.x1 - 1;
  if (rect.y1 <= rect.y0) rect.y1 = std::min(frame.height(), rect.y0 + 1), rect.y0 = rect.y1 - 1;
  return extractor(crop(frame, rect), box);
}

// ---- classifier --------------------------------------------------------------

Standardization fit_standardization(const std::vector<std::vector<double>>& xs) {
  Standardization s;
  if (xs.empty()) return s;
  const std::size_t d = xs.front().size();
  const double n = static_cast<double>(xs.size());
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& x : xs) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[j];
  }
  for (auto& m : s.mean) m /= n;
  for (const auto& x : xs) {
    for (std::size_t j = 0; j < d; ++j) s.scale[j] += (x[j] - s.mean[j]) * (x[j] - s.mean[j]);
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(s.scale[j] / n);
    s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])) ? sd : 1.0;
  }
  return s;
}

std::vector<double> standardize(const Standardization& s, const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - s.mean[j]) / s.scale[j];
  return out;
}

double logistic_loss(const std::vector<double>& w, double b, const std::vector<std::vector<double>>& xs,
                     const std::vector<int>& ys, double lambda) {
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) sum += softplus_neg(ys[i] * (dot(w, xs[i]) + b));
  return sum / static_cast<double>(xs.size()) + lambda * dot(w, w);
}

std::pair<std::vector<double>, double> logistic_gradient(const std::vector<double>& w, double b,
                                                         const std::vector<std::vector<double>>& xs,
                                                         const std::vector<int>& ys, double lambda) {
  std::vector<double> gw(w.size(), 0.0);
  double gb = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double z = ys[i] * (dot(w, xs[i]) + b);
    const double c = -ys[i] * sigmoid(-z) / n;
    for (std::size_t j = 0; j < w.size(); ++j) gw[j] += c * xs[i][j];
    gb += c;
  }
  for (std::size_t j = 0; j < w.size(); ++j) gw[j] += 2.0 * lambda * w[j];
  return {gw, gb};
}

MiniClassifier train_mini_classifier(const std::vector<LabeledSample>& samples, const TrainConfig& config) {
  if (!(config.lambda >= 0.0) || !(config.step > 0.0) || config.max_epochs < 0 ||
      !(config.threshold > 0.0 && config.threshold < 1.0)) {
    throw Error("invalid-config", "lambda >= 0, step > 0 and threshold in (0,1) required");
  }
  MiniClassifier c;
  c.threshold = config.threshold;
  for (const auto& s : samples) (s.positive ? c.meta.positives : c.meta.negatives)++;
  if (c.meta.positives == 0 || c.meta.negatives == 0) {
    throw Error("single-class-input", "training needs at least one positive and one negative sample");
  }
  const std::size_t d = samples.front().features.size();
  std::vector<std::vector<double>> raw;
  std::vector<int> ys;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != d) {
      throw Error("dimension-mismatch", "sample " + std::to_string(i) + " has dimension " +
                                            std::to_string(samples[i].features.size()) + ", expected " + std::to_string(d));
    }
    for (double v : samples[i].features) {
      if (!std::isfinite(v)) throw Error("dimension-mismatch", "non-finite feature in sample " + std::to_string(i));
    }
    raw.push_back(samples[i].features);
    ys.push_back(samples[i].positive ? 1 : -1);
  }
  c.standardization = fit_standardization(raw);
  std::vector<std::vector<double>> xs;
  xs.reserve(raw.size());
  for (const auto& x : raw) xs.push_back(standardize(c.standardization, x));

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  double loss = logistic_loss(w, b, xs, ys, config.lambda);
  c.meta.loss_trace.push_back(loss);
  double gnorm = 0.0;
  int epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    const auto [gw, gb] = logistic_gradient(w, b, xs, ys, config.lambda);
    gnorm = std::sqrt(dot(gw, gw) + gb * gb);
    if (gnorm < config.grad_tol) break;
    std::vector<double> g(gw);
    g.push_back(gb);
    auto dir = config.newton ? newton_direction(w, b, xs, config.lambda, g) : g;
    if (!(dot(dir, g) > 0.0)) dir = g;  // not a descent direction
    const double slope = dot(dir, g);
    double step = config.step;
    bool moved = false;
    while (step > 1e-16) {
      std::vector<double> wn(d);
      for (std::size_t j = 0; j < d; ++j) wn[j] = w[j] - step * dir[j];
      const double bn = b - step * dir[d];
      const double ln = logistic_loss(wn, bn, xs, ys, config.lambda);
      if (ln <= loss - 1e-4 * step * slope) {
        w = std::move(wn);
        b = bn;
        loss = ln;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;
    c.meta.loss_trace.push_back(loss);
  }
  c.weights = std::move(w);
  c.bias = b;
  c.meta.epochs = epoch;
  c.meta.final_loss = loss;
  c.meta.grad_norm = gnorm;
  return c;
}

Decision apply_classifier(const MiniClassifier& classifier, const std::vector<double>& features) {
  if (features.size() != classifier.dim()) {
    throw Error("dimension-mismatch", "classifier expects " + std::to_string(classifier.dim()) + " features, got " +
                                          std::to_string(features.size()),
                classifier.id);
  }
  std::vector<double> x = features;
  if (classifier.standardization.mean.size() == features.size()) x = standardize(classifier.standardization, features);
  const double p = sigmoid(dot(classifier.weights, x) + classifier.bias);
  return Decision{p >= classifier.threshold, p};
}

// ---- registry ------------------------------------------------------------------

std::string ClassifierRegistry::format_line(const MiniClassifier& c) {
  return c.id + "|" + c.virtual_synset + "|" + std::to_string(c.dim()) + "|" + encode_doubles(c.weights) + "|" +
         fmt17(c.bias) + "|" + fmt17(c.threshold) + "|" + encode_doubles(c.standardization.mean) + "," +
         encode_doubles(c.standardization.scale);
}

MiniClassifier ClassifierRegistry::parse_line(const std::string& line) {
  const auto cols = split(line, '|');
  if (cols.size() != 7) throw Error("registry-parse-error", "expected 7 fields", line.substr(0, 60));
  MiniClassifier c;
  try {
    c.id = cols[0];
    c.virtual_synset = cols[1];
    const auto d = static_cast<std::size_t>(std::stoull(cols[2]));
    c.weights = decode_doubles(cols[3]);
    c.bias = std::stod(cols[4]);
    c.threshold = std::stod(cols[5]);
    const auto stats = split(cols[6], ',');
    if (stats.size() != 2) throw Error("registry-parse-error", "standardization needs mean,scale", c.id);
    c.standardization.mean = decode_doubles(stats[0]);
    c.standardization.scale = decode_doubles(stats[1]);
    if (c.weights.size() != d || c.standardization.mean.size() != d || c.standardization.scale.size() != d) {
      throw Error("registry-parse-error", "vector lengths differ from d", c.id);
    }
  } catch (const Error& e) {
    if (e.code() == "registry-parse-error") throw;
    throw Error("registry-parse-error", e.what(), cols[0]);
  } catch (const std::exception& e) {
    throw Error("registry-parse-error", e.what(), cols[0]);
  }
  if (c.id.empty() || c.virtual_synset.empty() || !(c.threshold > 0.0 && c.threshold < 1.0)) {
    throw Error("registry-parse-error", "bad id or threshold", c.id);
  }
  return c;
}

ClassifierRegistry::ClassifierRegistry(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  std::istringstream in(read_file(*path_));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    entries_.push_back(parse_line(line));
  }
}

std::string ClassifierRegistry::put(MiniClassifier classifier) {
  std::lock_guard lock(mu_);
  std::size_t n = 1;
  for (const auto& e : entries_) n += e.virtual_synset == classifier.virtual_synset;
  classifier.id = classifier.virtual_synset + "@" + std::to_string(n);
  entries_.push_back(std::move(classifier));
  save_locked();
  return entries_.back().id;
}

void ClassifierRegistry::save_locked() const {
  if (!path_) return;
  std::string text;
  for (const auto& e : entries_) text += format_line(e) + "\n";
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  write_file_atomic(*path_, text);
}

std::optional<MiniClassifier> ClassifierRegistry::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  for (const auto& e : entries_) {
    if (e.id == id) return e;
  }
  return std::nullopt;
}

std::optional<MiniClassifier> ClassifierRegistry::latest_for(const std::string& virtual_synset) const {
  std::lock_guard lock(mu_);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->virtual_synset == virtual_synset) return *it;
  }
  return std::nullopt;
}

std::size_t ClassifierRegistry::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---- re-indexing ---------------------------------------------------------------

ReindexReport reindex(const std::string& virtual_id, const MiniClassifier& classifier, GraphStore& store,
                      const LexiconDb& lexicon, const FrameLoader& loader, const FeatureExtractor& extractor,
                      const std::function<void(const ReindexProgress&)>& on_progress) {
  const auto v = lexicon.virtual_synset(virtual_id);
  if (!v) throw Error("virtual-not-found", "unknown virtual synset", virtual_id);
  ReindexReport report;
  const auto snap = store.snapshot();
  std::vector<std::pair<std::string, GraphVersion>> targets;
  for (const auto& [vid, gv] : *snap) {
    if (gv.graph->find(v->parent) != nullptr) targets.emplace_back(vid, gv);
  }
  report.progress.graphs_total = targets.size();
  for (const auto& [vid, gv] : targets) {
    report.from_versions[vid] = gv.version;
    try {
      StoreSnapshot single{{vid, gv}};
      Evidence accepted;
      std::map<std::uint64_t, ImageBuffer> frames;
      for (const auto& c : collect_candidates(v->parent, single, std::numeric_limits<std::size_t>::max())) {
        auto it = frames.find(c.frame.frame_index);
        if (it == frames.end()) it = frames.emplace(c.frame.frame_index, loader(c.frame)).first;
        const auto decision = apply_classifier(classifier, candidate_features(it->second, c.box, extractor));
        ++report.progress.crops_scored;
        if (!decision.accept) continue;
        ++report.progress.crops_accepted;
        auto& info = accepted[FrameKey{c.frame.window_index, c.frame.frame_index}];
        info.timestamp = c.frame.timestamp;
        info.kinds.insert("classifier");
        info.words.insert(v->name);
        info.boxes.insert(c.box);
      }
      report.to_versions[vid] =
          accepted.empty() ? gv.version : store.put(attach_virtual(*gv.graph, virtual_id, accepted, lexicon));
    } catch (const std::exception& e) {
      report.failures[vid] = e.what();
    }
    ++report.progress.graphs_done;
    if (on_progress) on_progress(report.progress);
  }
  return report;
}

// ---- jobs ------------------------------------------------------------------------

std::string to_string(JobStatus status) {
  switch (status) {
    case JobStatus::queued:
      return "queued";
    case JobStatus::running:
      return "running";
    case JobStatus::done:
      return "done";
    case JobStatus::failed:
      return "failed";
  }
  return "unknown";
}

JobRunner::JobRunner() : worker_([this] { run(); }) {}

JobRunner::~JobRunner() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

std::string JobRunner::submit(const std::string& virtual_synset, Body body) {
  std::lock_guard lock(mu_);
  for (const auto& [id, job] : jobs_) {
    if (job.virtual_synset == virtual_synset && (job.status == JobStatus::queued || job.status == JobStatus::running)) {
      throw Error("job-active", "a job for this virtual synset is still active", id);
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(next_id_++));
  JobRecord rec;
  rec.id = buf;
  rec.virtual_synset = virtual_synset;
  jobs_[rec.id] = rec;
  queue_.emplace_back(rec.id, std::move(body));
  cv_.notify_all();
  return rec.id;
}

std::optional<JobRecord> JobRunner::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

JobRecord JobRunner::wait(const std::string& id) const {
  std::unique_lock lock(mu_);
  if (!jobs_.count(id)) throw Error("not-found", "unknown job", id);
  cv_.wait(lock, [&] {
    const auto s = jobs_.at(id).status;
    return s == JobStatus::done || s == JobStatus::failed;
  });
  return jobs_.at(id);
}

void JobRunner::run() {
  for (;;) {
    std::pair<std::string, Body> next;
    JobRecord rec;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (stop_) return;
      next = std::move(queue_.front());
      queue_.pop_front();
      auto& stored = jobs_.at(next.first);
      stored.status = JobStatus::running;
      rec = stored;
    }
    cv_.notify_all();
    auto publish = [&] {
      {
        std::lock_guard lock(mu_);
        jobs_[rec.id] = rec;
      }
      cv_.notify_all();
    };
    try {
      next.second(rec, publish);
      rec.status = JobStatus::done;
    } catch (const std::exception& e) {
      rec.status = JobStatus::failed;
      rec.error = e.what();
    }
    publish();
  }
}

}  // namespace vkg
