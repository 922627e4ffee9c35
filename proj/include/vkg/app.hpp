#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vkg/adapters.hpp"
#include "vkg/captions.hpp"
#include "vkg/continual.hpp"
#include "vkg/kb.hpp"
#include "vkg/keyframes.hpp"
#include "vkg/lexicon.hpp"
#include "vkg/retrieval.hpp"
#include "vkg/segmentation.hpp"

namespace vkg {

// ---- run configuration -------------------------------------------------------

struct RunConfig {
  std::optional<std::filesystem::path> pipeline;  // declarative spec; built-in recipe when absent
  std::optional<std::filesystem::path> stub_manifest;
  std::map<std::string, std::string> adapters;  // task -> http://host:port
  int adapter_timeout_ms = 5000;
  double theta = 0.15;
  double tau = 3.0;
  double alpha = 0.02;
  std::size_t k_min = 1;
  std::size_t k_max = 25;
  double fps = 1.0;  // keyframe sampling rate inside a window
  double max_silent_duration = 30.0;
  std::size_t queue_capacity = 4;
  bool include_ocr = false;
  double crop_pad = 0.02;
  double lambda = 1e-3;
  double threshold = 0.5;
  std::filesystem::path store = "vkg-store";
  std::optional<std::filesystem::path> lexicon;
};

/// Unknown keys are rejected. Relative paths resolve against `base_dir`.
/// Throws config-error with the offending key as context.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Throws config-error.
void validate(const RunConfig& config);

/// Settings that shape the KB, hashed into its pipeline fingerprint.
nlohmann::json fingerprint_config(const RunConfig& config);

/// Stub transport when a manifest is set, otherwise one HTTP client per
/// configured task. Throws config-error, manifest-error.
AdapterSet make_adapters(const RunConfig& config);

// ---- declarative pipelines -----------------------------------------------------

/// Built-in stages: keyframes, tag, ocr, ground, caption, parse_triplets,
/// coref, relations.
struct StageContext {
  AdapterSet adapters;
  KeyframeConfig keyframes;
  PromptConfig prompt;
  FocusConfig focus;
  RelationConfig relations;
  std::shared_ptr<const ConcretenessLexicon> concreteness;
  std::size_t queue_capacity = 4;
};

StageContext stage_context(const RunConfig& config, AdapterSet adapters);

/// {"name": ..., "queue_capacity": 4, "stages": [node, ...]} where a node is a
/// stage name, {"stage": name, "batch": {"max_batch", "flush_ms"}}, or a nested
/// {"sequential" | "parallel": name, "stages": [...]} or
/// {"loop": name, "stages": [...], "max_iterations": n, "while_missing": slot}.
/// Throws invalid-pipeline-spec.
PipelineSpec pipeline_from_json(const nlohmann::json& doc, const StageContext& context);

/// keyframes -> tag -> ocr -> ground -> caption -> parse_triplets -> coref -> relations
PipelineSpec default_pipeline(const StageContext& context);

// ---- fixture bundles -----------------------------------------------------------

/// Directory with frames/*.pgm|ppm (sorted by name = frame index), optional
/// transcript.json, optional stubs.json and optional bundle.json
/// {"video_id", "fps", "created_at"}.
struct FixtureBundle {
  std::filesystem::path dir;
  std::string video_id;
  double fps = 1.0;
  std::string created_at;
  std::vector<std::filesystem::path> frames;
  std::optional<TranscriptDocument> transcript;
  std::optional<std::filesystem::path> stub_manifest;
};

/// Throws bundle-error, malformed-document, non-monotonic-times.
FixtureBundle load_bundle(const std::filesystem::path& dir);

struct IngestResult {
  VideoKnowledgeBase kb;
  std::vector<StageFailure> failures;
  std::vector<std::string> warnings;
  std::size_t keyframes = 0;
  std::size_t triplets = 0;
};

/// Segments the transcript (the silent path when there is none), runs the
/// pipeline and writes the KB to `kb_out`. Keyframe images are copied to
/// `frames_out/<frame_index>.pnm` when given.
IngestResult ingest_bundle(const FixtureBundle& bundle, const RunConfig& config, const PipelineSpec& spec,
                           const std::optional<std::filesystem::path>& kb_out,
                           const std::optional<std::filesystem::path>& frames_out = std::nullopt);

// ---- workspace ----------------------------------------------------------------

std::filesystem::path store_kb_path(const std::filesystem::path& root, const std::string& video_id);
std::filesystem::path store_frames_dir(const std::filesystem::path& root, const std::string& video_id);

/// Everything under one store root:
///   graphs/<video>/vNNNNNN.json, kbs/<video>.json, frames/<video>/<frame>.pnm,
///   virtual_synsets.txt, classifiers.txt
class Workspace {
 public:
  /// Creates the layout, attaches the virtual registry to `lexicon`.
  Workspace(std::filesystem::path root, LexiconDb lexicon);

  const std::filesystem::path& root() const { return root_; }
  LexiconDb& lexicon() { return lexicon_; }
  const LexiconDb& lexicon() const { return lexicon_; }
  GraphStore& graphs() { return graphs_; }
  const GraphStore& graphs() const { return graphs_; }
  ClassifierRegistry& classifiers() { return classifiers_; }

  std::filesystem::path kb_path(const std::string& video_id) const;
  std::filesystem::path frames_dir(const std::string& video_id) const;
  /// Throws frame-not-found.
  ImageBuffer load_frame(const FrameRef& frame) const;

  /// video_to_kg over the KB file, then a versioned put. Returns the version.
  std::uint64_t build_graph(const std::filesystem::path& kb_file);

 private:
  std::filesystem::path root_;
  LexiconDb lexicon_;
  GraphStore graphs_;
  ClassifierRegistry classifiers_;
};

/// Lexicon from the config, else $VKG_WORDNET_DIR. Throws config-error.
LexiconDb load_lexicon(const RunConfig& config);

}  // namespace vkg
