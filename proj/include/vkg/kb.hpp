#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vkg/pipeline.hpp"
#include "vkg/window.hpp"

namespace vkg {

inline constexpr int kKbSchemaVersion = 1;

/// Everything the KB keeps about one keyframe. Item FrameRefs equal `frame`.
struct FrameRecord {
  FrameRef frame;
  std::vector<OcrSpan> ocr;
  std::vector<Tag> tags;
  std::vector<Detection> detections;
  std::vector<Caption> captions;
  std::vector<Triplet> triplets;
  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct WindowRecord {
  std::uint32_t index = 0;
  TranscriptSegment transcript;  // words are not persisted
  std::vector<FrameRecord> keyframes;
  /// Placeholder for a window the pipeline dropped.
  bool dropped = false;
  friend bool operator==(const WindowRecord&, const WindowRecord&) = default;
};

struct PipelineFingerprint {
  std::vector<std::string> stages;
  std::string config_hash;
  friend bool operator==(const PipelineFingerprint&, const PipelineFingerprint&) = default;
};

/// Stage names of a spec in execution order (nested specs flattened).
PipelineFingerprint fingerprint_of(const PipelineSpec& spec, const nlohmann::json& config);

struct VideoKnowledgeBase {
  int version = kKbSchemaVersion;
  std::string video_id;
  PipelineFingerprint fingerprint;
  std::string created_at;
  std::vector<WindowRecord> windows;
  friend bool operator==(const VideoKnowledgeBase&, const VideoKnowledgeBase&) = default;
};

/// Keyframes of a processed window with the per-frame slot items. Throws
/// missing-keyframes-slot.
WindowRecord window_record(const DataWindow& window);

/// Throws kb-validation-error naming the offending window/frame.
void validate_kb(const VideoKnowledgeBase& kb);

nlohmann::ordered_json kb_to_json(const VideoKnowledgeBase& kb);
/// Throws kb-parse-error, schema-version-mismatch, kb-validation-error.
VideoKnowledgeBase kb_from_json(const nlohmann::json& doc);

/// Pretty-printed, fixed key order, trailing newline.
std::string serialize_kb(const VideoKnowledgeBase& kb);
VideoKnowledgeBase parse_kb(const std::string& text);

VideoKnowledgeBase load_kb(const std::filesystem::path& path);
/// Validates, then writes atomically.
void save_kb(const VideoKnowledgeBase& kb, const std::filesystem::path& path);

/// DataWindowConsumer: accumulates one video's windows in order and writes
/// the KB document on finish().
class KbWriter {
 public:
  KbWriter(std::string video_id, PipelineFingerprint fingerprint, std::string created_at,
           std::optional<std::filesystem::path> path = std::nullopt);

  /// Throws out-of-order-window, missing-keyframes-slot, foreign-window.
  void consume(const DataWindow& window);
  /// Records a window the pipeline dropped, keeping indices contiguous.
  void skip(std::uint32_t window_index);

  /// Writes the document (when a path was given) and returns it.
  VideoKnowledgeBase finish();

  std::uint32_t next_index() const { return next_; }

 private:
  void check_order(std::uint32_t index);

  VideoKnowledgeBase kb_;
  std::optional<std::filesystem::path> path_;
  std::uint32_t next_ = 0;
};

/// Runs `spec` over `source` and writes the resulting KB; failed windows
/// become dropped placeholders.
VideoKnowledgeBase ingest_to_kb(const PipelineSpec& spec, WindowSource source, const std::string& video_id,
                                const PipelineFingerprint& fingerprint, const std::string& created_at,
                                const std::optional<std::filesystem::path>& path,
                                std::vector<StageFailure>* failures = nullptr);

}  // namespace vkg
