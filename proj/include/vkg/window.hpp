#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "vkg/image.hpp"
#include "vkg/types.hpp"

namespace vkg {

struct WordTiming {
  std::string surface;
  double start = 0.0;
  double end = 0.0;
  friend bool operator==(const WordTiming&, const WordTiming&) = default;
};

struct TranscriptSegment {
  std::string text;
  std::vector<WordTiming> words;
  double start = 0.0;
  double end = 0.0;

  bool empty() const { return text.empty() && words.empty(); }
  friend bool operator==(const TranscriptSegment&, const TranscriptSegment&) = default;
};

// ---- slot payload kinds -------------------------------------------------

struct Tag {
  FrameRef frame;
  std::string label;
  double confidence = 1.0;
  friend bool operator==(const Tag&, const Tag&) = default;
};

struct OcrSpan {
  FrameRef frame;
  std::string text;
  std::optional<Box> box;
  double confidence = 1.0;
  friend bool operator==(const OcrSpan&, const OcrSpan&) = default;
};

struct Detection {
  FrameRef frame;
  std::string label;
  Box box;
  double confidence = 1.0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

struct Caption {
  FrameRef frame;
  std::string text;
  std::optional<Box> crop;  // absent for the whole-frame caption
  std::size_t branch_index = 0;
  friend bool operator==(const Caption&, const Caption&) = default;
};

struct Triplet {
  std::string subject;
  std::string relation;
  std::string object;
  FrameRef frame;
  std::size_t caption_index = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct Keyframe {
  FrameRef frame;
  double laplacian_variance = 0.0;
  std::size_t cluster = 0;
  friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

struct TagList {
  std::vector<Tag> items;
  friend bool operator==(const TagList&, const TagList&) = default;
};

struct OcrSpans {
  std::vector<OcrSpan> items;
  friend bool operator==(const OcrSpans&, const OcrSpans&) = default;
};

struct Detections {
  std::vector<Detection> items;
  /// Frames for which no grounding prompt could be built (no tags); later
  /// stages fall back to whole-frame regions for them.
  std::vector<FrameRef> fallback_frames;
  friend bool operator==(const Detections&, const Detections&) = default;
};

struct Captions {
  std::vector<Caption> items;
  friend bool operator==(const Captions&, const Captions&) = default;
};

struct TripletList {
  std::vector<Triplet> items;
  friend bool operator==(const TripletList&, const TripletList&) = default;
};

struct KeyframeSelection {
  std::vector<Keyframe> keyframes;
  std::size_t chosen_k = 0;
  std::vector<std::pair<std::size_t, double>> scaled_inertia_curve;
  friend bool operator==(const KeyframeSelection&, const KeyframeSelection&) = default;
};

/// Free-form payload for bookkeeping slots and pipes without a typed schema.
struct GenericPayload {
  nlohmann::json value;
  friend bool operator==(const GenericPayload&, const GenericPayload&) = default;
};

using SlotPayload = std::variant<TagList, OcrSpans, Detections, Captions, TripletList,
                                 KeyframeSelection, GenericPayload>;

/// Every FrameRef mentioned by a payload.
std::vector<FrameRef> referenced_frames(const SlotPayload& payload);

struct InferenceSlot {
  std::string key;
  SlotPayload payload;
  std::string producer;
  /// Monotonic write sequence. Bookkeeping only: not part of equality.
  std::uint64_t produced_at = 0;

  friend bool operator==(const InferenceSlot& a, const InferenceSlot& b) {
    return a.key == b.key && a.producer == b.producer && a.payload == b.payload;
  }
};

InferenceSlot make_slot(std::string key, SlotPayload payload, std::string producer);

struct WindowFrame {
  FrameRef ref;
  FrameImage image;
};

/// Time-aligned segment of a video: frames, transcript and named inference
/// slots. Treated as a value: `with_slot` returns a new version.
class DataWindow {
 public:
  DataWindow() = default;

  const std::string& window_id() const { return window_id_; }
  const std::string& video_id() const { return video_id_; }
  std::uint32_t window_index() const { return window_index_; }
  const std::vector<WindowFrame>& frames() const { return frames_; }
  const TranscriptSegment& transcript() const { return transcript_; }
  const std::map<std::string, InferenceSlot>& slots() const { return slots_; }

  const InferenceSlot* find_slot(const std::string& key) const;
  bool has_slot(const std::string& key) const { return find_slot(key) != nullptr; }

  template <class Payload>
  const Payload* payload(const std::string& key) const {
    const auto* slot = find_slot(key);
    return slot ? std::get_if<Payload>(&slot->payload) : nullptr;
  }

  const WindowFrame* find_frame(std::uint64_t frame_index) const;
  bool contains_frame(const FrameRef& ref) const;

  DataWindow with_slot(InferenceSlot slot) const&;
  DataWindow with_slot(InferenceSlot slot) &&;

  /// Equality ignores pixel data and slot write order.
  friend bool operator==(const DataWindow& a, const DataWindow& b);

 private:
  friend DataWindow new_window(std::string video_id, std::uint32_t window_index,
                               std::vector<WindowFrame> frames, TranscriptSegment transcript);
  void put(InferenceSlot slot);

  std::string window_id_;
  std::string video_id_;
  std::uint32_t window_index_ = 0;
  std::vector<WindowFrame> frames_;
  TranscriptSegment transcript_;
  std::map<std::string, InferenceSlot> slots_;
};

std::string make_window_id(const std::string& video_id, std::uint32_t window_index);

/// Errors: empty-window, unordered-frames, foreign-frame-ref (frame of another
/// video/window), invalid-transcript.
DataWindow new_window(std::string video_id, std::uint32_t window_index,
                      std::vector<WindowFrame> frames, TranscriptSegment transcript);

/// Errors: foreign-frame-ref, key-collision-different-producer.
DataWindow put_slot(const DataWindow& window, InferenceSlot slot);

/// Min/max over the transcript span (when present) and all frame timestamps.
std::pair<double, double> window_span(const DataWindow& window);

}  // namespace vkg
