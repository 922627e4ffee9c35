#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vkg/captions.hpp"
#include "vkg/image.hpp"
#include "vkg/pipeline.hpp"
#include "vkg/segmentation.hpp"
#include "vkg/window.hpp"

namespace vkg {

enum class TaskKind { transcribe, tag, ground, ocr, caption, parse_triplets, coref };

std::string to_string(TaskKind task);
/// Throws unknown-task.
TaskKind task_kind_from(const std::string& name);

inline constexpr int kAdapterProtocolVersion = 1;

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{20};
  double multiplier = 2.0;
};

struct AdapterEndpoint {
  TaskKind task = TaskKind::tag;
  std::string base_url;  // http://host:port
  std::chrono::milliseconds timeout{5000};
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  /// Send encoded pixels with image requests instead of the bare content hash.
  bool inline_pixels = false;
};

/// Throws invalid-endpoint.
void validate(const AdapterEndpoint& endpoint);

// ---- task schemas ----------------------------------------------------------
//
// request  {version, task, ...}
//   transcribe      {media}
//   tag, ocr        {image}
//   ground          {image, phrases}
//   caption         {image}
//   parse_triplets  {sentence}
//   coref           {sentences}
// image = {hash, width, height, channels[, pnm_base64]}
//
// response {version, task, ...}
//   transcribe      {words: [{w, s, e}]}
//   tag             {tags: [{label, confidence}]}
//   ground          {detections: [{label, box, confidence}]}
//   ocr             {spans: [{text, box?, confidence}]}
//   caption         {caption}
//   parse_triplets  {triplets: [{subject, relation, object}]}
//   coref           {map: {mention: canonical}}

/// Throws schema-error naming the offending field in the context.
void validate_request(TaskKind task, const nlohmann::json& request);
void validate_response(TaskKind task, const nlohmann::json& response);

nlohmann::json image_ref(const ImageBuffer& image, bool inline_pixels = false);
nlohmann::json make_request(TaskKind task, nlohmann::json fields);

/// Content key of a request: the image hash for image tasks, the media id for
/// transcription and the hash of the text for text tasks.
std::string request_key(TaskKind task, const nlohmann::json& request);

// ---- transports ------------------------------------------------------------

class AdapterTransport {
 public:
  virtual ~AdapterTransport() = default;
  /// One attempt. Throws Error("transport-error" | "timeout").
  virtual nlohmann::json send(const AdapterEndpoint& endpoint, const nlohmann::json& request) = 0;
};

/// POST {base_url}/v1/{task} with a JSON body.
class HttpTransport : public AdapterTransport {
 public:
  nlohmann::json send(const AdapterEndpoint& endpoint, const nlohmann::json& request) override;
};

/// Canned responses keyed by request_key. Manifest layout:
///   {"version": 1,
///    "responses": {"tag": {"<key>": {...}}, ...},
///    "defaults":  {"caption": {...}, ...}}
/// Stored responses omit version/task; both are filled in on the way out.
/// A key missing from both tables throws stub-miss.
class StubTransport : public AdapterTransport {
 public:
  StubTransport() = default;
  explicit StubTransport(nlohmann::json manifest);
  /// Throws manifest-error.
  static std::shared_ptr<StubTransport> load(const std::filesystem::path& path);

  void put(TaskKind task, const std::string& key, nlohmann::json response);
  void put_default(TaskKind task, nlohmann::json response);
  nlohmann::json manifest() const;

  nlohmann::json send(const AdapterEndpoint& endpoint, const nlohmann::json& request) override;
  std::size_t calls() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::map<std::string, nlohmann::json>> responses_;
  std::map<std::string, nlohmann::json> defaults_;
  std::size_t calls_ = 0;
};

/// Validates the request, retries transport failures per the policy, and
/// validates the response. Errors: schema-error, transport-error, timeout.
nlohmann::json call_adapter(const AdapterEndpoint& endpoint, const nlohmann::json& request,
                            AdapterTransport& transport);

/// Shareable handle; bounds in-flight calls to endpoint.max_in_flight.
class AdapterClient {
 public:
  AdapterClient(AdapterEndpoint endpoint, std::shared_ptr<AdapterTransport> transport);

  const AdapterEndpoint& endpoint() const { return state_->endpoint; }
  nlohmann::json call(const nlohmann::json& request) const;
  /// Highest number of concurrent calls observed.
  std::size_t peak_in_flight() const;

 private:
  struct State {
    AdapterEndpoint endpoint;
    std::shared_ptr<AdapterTransport> transport;
    std::mutex mu;
    std::condition_variable cv;
    std::size_t in_flight = 0;
    std::size_t peak = 0;
  };
  std::shared_ptr<State> state_;
};

/// One client per task kind.
using AdapterSet = std::map<TaskKind, AdapterClient>;

/// Every task served by the same stub transport.
AdapterSet stub_adapters(const std::shared_ptr<StubTransport>& stub);

// ---- response decoding -----------------------------------------------------

std::vector<WordTiming> words_from_response(const nlohmann::json& response);
std::vector<Tag> tags_from_response(const nlohmann::json& response, const FrameRef& frame);
std::vector<Detection> detections_from_response(const nlohmann::json& response, const FrameRef& frame);
std::vector<OcrSpan> ocr_from_response(const nlohmann::json& response, const FrameRef& frame);
std::string caption_from_response(const nlohmann::json& response);
std::vector<Triplet> triplets_from_response(const nlohmann::json& response);
CorefMap coref_from_response(const nlohmann::json& response);

// ---- prompt director and focuser ---------------------------------------------

struct GroundingPrompt {
  std::vector<std::string> phrases;
  FrameRef frame;
  friend bool operator==(const GroundingPrompt&, const GroundingPrompt&) = default;
};

struct PromptConfig {
  /// Append the frame's OCR spans as extra phrases.
  bool include_ocr = false;
};

struct PromptResult {
  std::optional<GroundingPrompt> prompt;
  /// No phrases: grounding is skipped and the frame falls back to whole-frame regions.
  bool fallback = false;
};

/// Distinct tag labels of `frame` in first-seen order (case-insensitive).
/// Throws missing-slot without a "tags" slot.
PromptResult build_grounding_prompt(const DataWindow& window, const FrameRef& frame, const PromptConfig& config = {});

struct CropSpec {
  FrameRef source;
  Box box;  // region actually cut, normalized
  std::size_t branch_index = 0;
  friend bool operator==(const CropSpec&, const CropSpec&) = default;
};

struct FocusedCrop {
  CropSpec spec;
  PixelRect rect;
  ImageBuffer image;
};

struct FocusConfig {
  double pad = 0.02;  // fraction of the image size added on each side
  int min_area_px = 4;
};

/// Pixel rectangle of `box` grown by `pad` and clamped to the image.
PixelRect padded_rect(const Box& box, int width, int height, double pad);

/// Branch 0 is the whole frame, then one crop per detection in order.
/// Crops under min_area_px after clamping are skipped with a warning.
std::vector<FocusedCrop> focus_crops(const ImageBuffer& frame, const FrameRef& ref,
                                     const std::vector<Detection>& detections, const FocusConfig& config = {},
                                     const WarningSink& on_warning = {});

// ---- recipe pipes ------------------------------------------------------------

TranscriptDocument transcribe(const AdapterClient& client, const std::string& video_id, const std::string& media);

/// keyframes -> tags
Pipe tag_pipe(AdapterClient client);
/// keyframes -> ocr
Pipe ocr_pipe(AdapterClient client);
/// keyframes, tags[, ocr] -> detections
Pipe grounding_pipe(AdapterClient client, PromptConfig config = {});
/// keyframes, detections -> captions, one branch per crop
Pipe caption_pipe(AdapterClient client, FocusConfig config = {});
/// captions -> parsed_triplets
Pipe parse_triplets_pipe(AdapterClient client);
/// captions -> coref
Pipe coref_pipe(AdapterClient client);

}  // namespace vkg
