#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vkg/image.hpp"
#include "vkg/kg.hpp"
#include "vkg/lexicon.hpp"
#include "vkg/retrieval.hpp"

namespace vkg {

// ---- candidates --------------------------------------------------------------

struct Candidate {
  FrameRef frame;
  Box box;  // whole frame when the evidence carried no box
  /// Stable handle "video/w<window>/f<frame>/x0,y0,x1,y1".
  std::string key;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

std::string candidate_key(const FrameRef& frame, const Box& box);

/// Evidence crops of `parent` across the snapshot, deduplicated by
/// (video, frame, box) and ordered by (video_id, frame_index, box).
/// Throws parent-unseen.
std::vector<Candidate> collect_candidates(const std::string& parent, const StoreSnapshot& snapshot, std::size_t limit);

/// Pixels of a frame. Throws when the frame is unavailable.
using FrameLoader = std::function<ImageBuffer(const FrameRef&)>;
/// Fixed-length descriptor of a crop.
using FeatureExtractor = std::function<std::vector<double>(const ImageBuffer& crop, const Box& box)>;

inline constexpr std::size_t kDefaultFeatureDim = 260;

/// 256 normalized gray-histogram bins, log1p(Laplacian variance), box width,
/// box height and log(width / height).
std::vector<double> default_features(const ImageBuffer& crop, const Box& box);

/// Crops `box` out of `frame` (no padding) and extracts features.
std::vector<double> candidate_features(const ImageBuffer& frame, const Box& box, const FeatureExtractor& extractor);

// ---- classifier --------------------------------------------------------------

struct LabeledSample {
  std::vector<double> features;
  bool positive = false;
  FrameRef frame;
  Box box;
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;  // population std, 1 where it vanishes
  friend bool operator==(const Standardization&, const Standardization&) = default;
};

Standardization fit_standardization(const std::vector<std::vector<double>>& xs);
std::vector<double> standardize(const Standardization& s, const std::vector<double>& x);

struct TrainConfig {
  double lambda = 1e-3;
  double step = 1.0;
  int max_epochs = 5000;
  double grad_tol = 1e-6;
  double threshold = 0.5;
  /// false: plain gradient direction.
  bool newton = true;
};

struct TrainingMeta {
  int epochs = 0;
  double final_loss = 0.0;
  double grad_norm = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<double> loss_trace;  // loss after each accepted step, starting at w = 0
  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct MiniClassifier {
  std::string id;
  std::string virtual_synset;
  std::vector<double> weights;
  double bias = 0.0;
  double threshold = 0.5;
  Standardization standardization;
  TrainingMeta meta;

  std::size_t dim() const { return weights.size(); }
};

/// Regularized logistic loss on standardized inputs; labels are ±1.
double logistic_loss(const std::vector<double>& w, double b, const std::vector<std::vector<double>>& xs,
                     const std::vector<int>& ys, double lambda);
/// Gradient of logistic_loss: (dw, db).
std::pair<std::vector<double>, double> logistic_gradient(const std::vector<double>& w, double b,
                                                         const std::vector<std::vector<double>>& xs,
                                                         const std::vector<int>& ys, double lambda);

/// Full-batch descent with backtracking halving from `step`; the direction is
/// the Newton step unless `newton` is off. Throws single-class-input,
/// dimension-mismatch, invalid-config.
MiniClassifier train_mini_classifier(const std::vector<LabeledSample>& samples, const TrainConfig& config = {});

struct Decision {
  bool accept = false;
  double probability = 0.0;
};

/// Throws dimension-mismatch.
Decision apply_classifier(const MiniClassifier& classifier, const std::vector<double>& features);

/// Registry file, one classifier per line:
///   id|virtual_synset|d|weights|bias|threshold|mean,scale
/// Vectors are base64 little-endian doubles; bias and threshold are %.17g.
class ClassifierRegistry {
 public:
  ClassifierRegistry() = default;
  /// Loads an existing file. Throws registry-parse-error.
  explicit ClassifierRegistry(std::filesystem::path path);

  /// Assigns "<virtual_synset>@<n>" as the id, stores and persists. Returns the id.
  std::string put(MiniClassifier classifier);
  std::optional<MiniClassifier> get(const std::string& id) const;
  /// Most recently stored classifier of a virtual synset.
  std::optional<MiniClassifier> latest_for(const std::string& virtual_synset) const;
  std::size_t size() const;

  static std::string format_line(const MiniClassifier& c);
  static MiniClassifier parse_line(const std::string& line);

 private:
  void save_locked() const;
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::vector<MiniClassifier> entries_;
};

// ---- re-indexing ---------------------------------------------------------------

struct ReindexProgress {
  std::size_t graphs_total = 0;
  std::size_t graphs_done = 0;
  std::size_t crops_scored = 0;
  std::size_t crops_accepted = 0;
};

struct ReindexReport {
  std::map<std::string, std::uint64_t> from_versions;  // graphs holding the parent
  std::map<std::string, std::uint64_t> to_versions;
  std::map<std::string, std::string> failures;  // video -> message
  ReindexProgress progress;
};

/// Scores every parent-evidence crop with the classifier and attaches the
/// accepted ones under the virtual node. Per-graph failures are recorded and
/// the remaining graphs still run.
ReindexReport reindex(const std::string& virtual_id, const MiniClassifier& classifier, GraphStore& store,
                      const LexiconDb& lexicon, const FrameLoader& loader, const FeatureExtractor& extractor,
                      const std::function<void(const ReindexProgress&)>& on_progress = {});

// ---- background jobs -------------------------------------------------------------

enum class JobStatus { queued, running, done, failed };
std::string to_string(JobStatus status);

struct JobRecord {
  std::string id;
  std::string virtual_synset;
  JobStatus status = JobStatus::queued;
  ReindexProgress progress;
  std::map<std::string, std::uint64_t> from_versions;
  std::map<std::string, std::uint64_t> to_versions;
  std::map<std::string, std::string> failures;  // per-graph reindex failures
  std::string classifier_id;
  std::string error;
};

/// Single worker; one active (queued or running) job per virtual synset.
class JobRunner {
 public:
  /// The job body fills the record through the handle it is given.
  using Body = std::function<void(JobRecord&, const std::function<void()>& publish)>;

  JobRunner();
  ~JobRunner();
  JobRunner(const JobRunner&) = delete;
  JobRunner& operator=(const JobRunner&) = delete;

  /// Throws job-active.
  std::string submit(const std::string& virtual_synset, Body body);
  std::optional<JobRecord> get(const std::string& id) const;
  /// Blocks until the job is done or failed.
  JobRecord wait(const std::string& id) const;

 private:
  void run();

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, JobRecord> jobs_;
  std::deque<std::pair<std::string, Body>> queue_;
  std::uint64_t next_id_ = 1;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace vkg
