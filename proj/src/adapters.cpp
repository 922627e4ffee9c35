#include "vkg/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "httplib.h"

#include "vkg/error.hpp"
#include "vkg/hash.hpp"
#include "vkg/slots.hpp"
#include "vkg/text.hpp"

namespace vkg {

using nlohmann::json;

namespace {

const std::vector<std::pair<TaskKind, const char*>> kTaskNames{
    {TaskKind::transcribe, "transcribe"}, {TaskKind::tag, "tag"},
    {TaskKind::ground, "ground"},         {TaskKind::ocr, "ocr"},
    {TaskKind::caption, "caption"},       {TaskKind::parse_triplets, "parse_triplets"},
    {TaskKind::coref, "coref"},
};

[[noreturn]] void schema_fail(TaskKind task, const std::string& field, const std::string& message) {
  throw Error("schema-error", message, to_string(task) + "." + field);
}

const json& require(TaskKind task, const json& doc, const char* field) {
  if (!doc.is_object() || !doc.contains(field)) schema_fail(task, field, std::string("missing field ") + field);
  return doc.at(field);
}

std::string require_string(TaskKind task, const json& doc, const char* field, bool non_empty) {
  const auto& v = require(task, doc, field);
  if (!v.is_string()) schema_fail(task, field, std::string(field) + " must be a string");
  auto s = v.get<std::string>();
  if (non_empty && trim(s).empty()) schema_fail(task, field, std::string(field) + " is empty");
  return s;
}

double require_number(TaskKind task, const json& doc, const char* field) {
  const auto& v = require(task, doc, field);
  if (!v.is_number()) schema_fail(task, field, std::string(field) + " must be a number");
  return v.get<double>();
}

const json& require_array(TaskKind task, const json& doc, const char* field) {
  const auto& v = require(task, doc, field);
  if (!v.is_array()) schema_fail(task, field, std::string(field) + " must be an array");
  return v;
}

void check_confidence(TaskKind task, const json& item, const std::string& where) {
  const double c = require_number(task, item, "confidence");
  if (!(c >= 0.0 && c <= 1.0)) schema_fail(task, where + ".confidence", "confidence outside [0,1]");
}

Box parse_box(TaskKind task, const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) schema_fail(task, where, "box must be [x0,y0,x1,y1]");
  for (const auto& x : v) {
    if (!x.is_number()) schema_fail(task, where, "box must be numeric");
  }
  Box b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
  if (!b.valid()) schema_fail(task, where, "box is not a valid normalized rectangle");
  return b;
}

void check_envelope(TaskKind task, const json& doc) {
  if (!doc.is_object()) schema_fail(task, "$", "document must be an object");
  const auto& v = require(task, doc, "version");
  if (!v.is_number_integer() || v.get<int>() != kAdapterProtocolVersion) {
    schema_fail(task, "version", "unsupported protocol version");
  }
  if (require_string(task, doc, "task", true) != to_string(task)) schema_fail(task, "task", "task kind mismatch");
}

void check_image(TaskKind task, const json& doc) {
  const auto& img = require(task, doc, "image");
  if (!img.is_object()) schema_fail(task, "image", "image must be an object");
  const auto hash = require_string(task, img, "hash", true);
  if (hash.size() != 64) schema_fail(task, "image.hash", "image hash must be 64 hex digits");
  for (const char* dim : {"width", "height", "channels"}) {
    const auto& v = require(task, img, dim);
    if (!v.is_number_integer() || v.get<int>() <= 0) schema_fail(task, std::string("image.") + dim, "bad dimension");
  }
  const int ch = img.at("channels").get<int>();
  if (ch != 1 && ch != 3) schema_fail(task, "image.channels", "channels must be 1 or 3");
  if (img.contains("pnm_base64") && !img.at("pnm_base64").is_string()) {
    schema_fail(task, "image.pnm_base64", "pixels must be a base64 string");
  }
}

bool is_image_task(TaskKind task) {
  return task == TaskKind::tag || task == TaskKind::ground || task == TaskKind::ocr || task == TaskKind::caption;
}

}  // namespace

std::string to_string(TaskKind task) {
  for (const auto& [k, name] : kTaskNames) {
    if (k == task) return name;
  }
  return "unknown";
}

TaskKind task_kind_from(const std::string& name) {
  for (const auto& [k, n] : kTaskNames) {
    if (name == n) return k;
  }
  throw Error("unknown-task", "unknown adapter task '" + name + "'", name);
}

void validate(const AdapterEndpoint& endpoint) {
  const auto ctx = to_string(endpoint.task);
  if (endpoint.timeout.count() <= 0) throw Error("invalid-endpoint", "timeout must be positive", ctx);
  if (endpoint.retry.max_attempts < 1) throw Error("invalid-endpoint", "max_attempts must be >= 1", ctx);
  if (endpoint.retry.backoff.count() < 0 || endpoint.retry.multiplier < 1.0) {
    throw Error("invalid-endpoint", "backoff must be non-negative and non-shrinking", ctx);
  }
  if (endpoint.max_in_flight == 0) throw Error("invalid-endpoint", "max_in_flight must be >= 1", ctx);
}

void validate_request(TaskKind task, const json& request) {
  check_envelope(task, request);
  switch (task) {
    case TaskKind::transcribe:
      require_string(task, request, "media", true);
      break;
    case TaskKind::tag:
    case TaskKind::ocr:
    case TaskKind::caption:
      check_image(task, request);
      break;
    case TaskKind::ground: {
      check_image(task, request);
      const auto& phrases = require_array(task, request, "phrases");
      if (phrases.empty()) schema_fail(task, "phrases", "phrases must be non-empty");
      for (const auto& p : phrases) {
        if (!p.is_string() || trim(p.get<std::string>()).empty()) schema_fail(task, "phrases", "phrase must be text");
      }
      break;
    }
    case TaskKind::parse_triplets:
      require_string(task, request, "sentence", false);
      break;
    case TaskKind::coref:
      for (const auto& s : require_array(task, request, "sentences")) {
        if (!s.is_string()) schema_fail(task, "sentences", "sentence must be a string");
      }
      break;
  }
}

void validate_response(TaskKind task, const json& response) {
  check_envelope(task, response);
  switch (task) {
    case TaskKind::transcribe: {
      double last = -1.0;
      const auto& words = require_array(task, response, "words");
      for (std::size_t i = 0; i < words.size(); ++i) {
        const auto where = "words[" + std::to_string(i) + "]";
        require_string(task, words[i], "w", true);
        const double s = require_number(task, words[i], "s");
        const double e = require_number(task, words[i], "e");
        if (s < 0.0 || e < s || s < last) schema_fail(task, where, "word times must be ordered");
        last = s;
      }
      break;
    }
    case TaskKind::tag: {
      const auto& tags = require_array(task, response, "tags");
      for (std::size_t i = 0; i < tags.size(); ++i) {
        require_string(task, tags[i], "label", true);
        check_confidence(task, tags[i], "tags[" + std::to_string(i) + "]");
      }
      break;
    }
    case TaskKind::ground: {
      const auto& dets = require_array(task, response, "detections");
      for (std::size_t i = 0; i < dets.size(); ++i) {
        const auto where = "detections[" + std::to_string(i) + "]";
        require_string(task, dets[i], "label", true);
        parse_box(task, require(task, dets[i], "box"), where + ".box");
        check_confidence(task, dets[i], where);
      }
      break;
    }
    case TaskKind::ocr: {
      const auto& spans = require_array(task, response, "spans");
      for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto where = "spans[" + std::to_string(i) + "]";
        require_string(task, spans[i], "text", false);
        if (spans[i].contains("box") && !spans[i].at("box").is_null()) parse_box(task, spans[i].at("box"), where + ".box");
        check_confidence(task, spans[i], where);
      }
      break;
    }
    case TaskKind::caption:
      require_string(task, response, "caption", false);
      break;
    case TaskKind::parse_triplets:
      for (const auto& t : require_array(task, response, "triplets")) {
        for (const char* f : {"subject", "relation", "object"}) require_string(task, t, f, true);
      }
      break;
    case TaskKind::coref: {
      const auto& map = require(task, response, "map");
      if (!map.is_object()) schema_fail(task, "map", "map must be an object");
      for (const auto& [mention, canonical] : map.items()) {
        if (!canonical.is_string()) schema_fail(task, "map." + mention, "canonical mention must be a string");
      }
      break;
    }
  }
}

json image_ref(const ImageBuffer& image, bool inline_pixels) {
  json ref{{"hash", content_hash(image)},
           {"width", image.width()},
           {"height", image.height()},
           {"channels", image.channels()}};
  if (inline_pixels) ref["pnm_base64"] = base64_encode(encode_pnm(image));
  return ref;
}

json make_request(TaskKind task, json fields) {
  json req{{"version", kAdapterProtocolVersion}, {"task", to_string(task)}};
  for (auto& [k, v] : fields.items()) req[k] = std::move(v);
  return req;
}

std::string request_key(TaskKind task, const json& request) {
  if (is_image_task(task)) return request.at("image").at("hash").get<std::string>();
  if (task == TaskKind::transcribe) return request.at("media").get<std::string>();
  if (task == TaskKind::parse_triplets) return sha256_hex(request.at("sentence").get<std::string>());
  std::string joined;
  for (const auto& s : request.at("sentences")) joined += s.get<std::string>() + "\n";
  return sha256_hex(joined);
}

// ---- transports ---------------------------------------------------------------

json HttpTransport::send(const AdapterEndpoint& endpoint, const json& request) {
  httplib::Client client(endpoint.base_url);
  if (!client.is_valid()) throw Error("transport-error", "invalid adapter address", endpoint.base_url);
  const auto ms = endpoint.timeout.count();
  client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_write_timeout(ms / 1000, (ms % 1000) * 1000);
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post("/v1/" + to_string(endpoint.task), request.dump(), "application/json");
  if (!res) {
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                           (res.error() == httplib::Error::Read && elapsed >= endpoint.timeout * 9 / 10);
    if (timed_out) throw Error("timeout", "adapter did not answer in time", endpoint.base_url);
    throw Error("transport-error", "request failed: " + httplib::to_string(res.error()), endpoint.base_url);
  }
  if (res->status != 200) {
    throw Error("transport-error", "adapter answered HTTP " + std::to_string(res->status), endpoint.base_url);
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error("schema-error", std::string("response is not JSON: ") + e.what(), to_string(endpoint.task));
  }
}

StubTransport::StubTransport(json manifest) {
  auto fail = [](const std::string& msg) { throw Error("manifest-error", msg, "stub manifest"); };
  if (!manifest.is_object()) fail("manifest must be an object");
  if (manifest.value("version", 0) != 1) fail("manifest version must be 1");
  if (manifest.contains("responses")) {
    if (!manifest["responses"].is_object()) fail("responses must be an object");
    for (auto& [task, table] : manifest["responses"].items()) {
      const auto kind = task_kind_from(task);
      if (!table.is_object()) fail("responses." + task + " must be an object");
      for (auto& [key, resp] : table.items()) put(kind, key, resp);
    }
  }
  if (manifest.contains("defaults")) {
    if (!manifest["defaults"].is_object()) fail("defaults must be an object");
    for (auto& [task, resp] : manifest["defaults"].items()) put_default(task_kind_from(task), resp);
  }
}

std::shared_ptr<StubTransport> StubTransport::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("manifest-error", std::string("stub manifest is not JSON: ") + e.what(), path.string());
  }
  return std::make_shared<StubTransport>(std::move(doc));
}

void StubTransport::put(TaskKind task, const std::string& key, json response) {
  std::lock_guard lock(mu_);
  responses_[to_string(task)][key] = std::move(response);
}

void StubTransport::put_default(TaskKind task, json response) {
  std::lock_guard lock(mu_);
  defaults_[to_string(task)] = std::move(response);
}

json StubTransport::manifest() const {
  std::lock_guard lock(mu_);
  json doc{{"version", 1}, {"responses", json::object()}, {"defaults", json::object()}};
  for (const auto& [task, table] : responses_) {
    for (const auto& [key, resp] : table) doc["responses"][task][key] = resp;
  }
  for (const auto& [task, resp] : defaults_) doc["defaults"][task] = resp;
  return doc;
}

json StubTransport::send(const AdapterEndpoint& endpoint, const json& request) {
  const auto key = request_key(endpoint.task, request);
  const auto task = to_string(endpoint.task);
  json out;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    auto table = responses_.find(task);
    if (table != responses_.end()) {
      if (auto it = table->second.find(key); it != table->second.end()) out = it->second;
    }
    if (out.is_null()) {
      auto d = defaults_.find(task);
      if (d == defaults_.end()) throw Error("stub-miss", "no canned response for " + key, task);
      out = d->second;
    }
  }
  if (out.is_object()) {
    out["version"] = kAdapterProtocolVersion;
    out["task"] = task;
  }
  return out;
}

std::size_t StubTransport::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

json call_adapter(const AdapterEndpoint& endpoint, const json& request, AdapterTransport& transport) {
  validate(endpoint);
  validate_request(endpoint.task, request);
  auto delay = std::chrono::duration<double, std::milli>(endpoint.retry.backoff);
  std::string last_code;
  std::string last_message;
  for (int attempt = 1; attempt <= endpoint.retry.max_attempts; ++attempt) {
    try {
      auto response = transport.send(endpoint, request);
      validate_response(endpoint.task, response);
      return response;
    } catch (const Error& e) {
      if (e.code() != "transport-error" && e.code() != "timeout") throw;
      last_code = e.code();
      last_message = e.what();
    }
    if (attempt < endpoint.retry.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay *= endpoint.retry.multiplier;
    }
  }
  throw Error(last_code,
              last_message + " (after " + std::to_string(endpoint.retry.max_attempts) + " attempts)",
              endpoint.base_url.empty() ? to_string(endpoint.task) : endpoint.base_url);
}

AdapterClient::AdapterClient(AdapterEndpoint endpoint, std::shared_ptr<AdapterTransport> transport)
    : state_(std::make_shared<State>()) {
  validate(endpoint);
  if (!transport) throw Error("invalid-endpoint", "no transport", to_string(endpoint.task));
  state_->endpoint = std::move(endpoint);
  state_->transport = std::move(transport);
}

json AdapterClient::call(const json& request) const {
  auto& s = *state_;
  {
    std::unique_lock lock(s.mu);
    s.cv.wait(lock, [&] { return s.in_flight < s.endpoint.max_in_flight; });
    ++s.in_flight;
    s.peak = std::max(s.peak, s.in_flight);
  }
  struct Release {
    State& s;
    ~Release() {
      {
        std::lock_guard lock(s.mu);
        --s.in_flight;
      }
      s.cv.notify_one();
    }
  } release{s};
  return call_adapter(s.endpoint, request, *s.transport);
}

std::size_t AdapterClient::peak_in_flight() const {
  std::lock_guard lock(state_->mu);
  return state_->peak;
}

AdapterSet stub_adapters(const std::shared_ptr<StubTransport>& stub) {
  AdapterSet set;
  for (const auto& [task, name] : kTaskNames) {
    AdapterEndpoint ep;
    ep.task = task;
    ep.base_url = std::string("stub://") + name;
    set.emplace(task, AdapterClient(ep, stub));
  }
  return set;
}

// ---- decoding -------------------------------------------------------------------

std::vector<WordTiming> words_from_response(const json& response) {
  validate_response(TaskKind::transcribe, response);
  std::vector<WordTiming> out;
  for (const auto& w : response.at("words")) {
    out.push_back(WordTiming{w.at("w").get<std::string>(), w.at("s").get<double>(), w.at("e").get<double>()});
  }
  return out;
}

std::vector<Tag> tags_from_response(const json& response, const FrameRef& frame) {
  validate_response(TaskKind::tag, response);
  std::vector<Tag> out;
  for (const auto& t : response.at("tags")) {
    out.push_back(Tag{frame, trim(t.at("label").get<std::string>()), t.at("confidence").get<double>()});
  }
  return out;
}

std::vector<Detection> detections_from_response(const json& response, const FrameRef& frame) {
  validate_response(TaskKind::ground, response);
  std::vector<Detection> out;
  for (const auto& d : response.at("detections")) {
    out.push_back(Detection{frame, trim(d.at("label").get<std::string>()),
                            parse_box(TaskKind::ground, d.at("box"), "box"), d.at("confidence").get<double>()});
  }
  return out;
}

std::vector<OcrSpan> ocr_from_response(const json& response, const FrameRef& frame) {
  validate_response(TaskKind::ocr, response);
  std::vector<OcrSpan> out;
  for (const auto& s : response.at("spans")) {
    std::optional<Box> box;
    if (s.contains("box") && !s.at("box").is_null()) box = parse_box(TaskKind::ocr, s.at("box"), "box");
    auto text = trim(s.at("text").get<std::string>());
    if (text.empty()) continue;
    out.push_back(OcrSpan{frame, std::move(text), box, s.at("confidence").get<double>()});
  }
  return out;
}

std::string caption_from_response(const json& response) {
  validate_response(TaskKind::caption, response);
  return trim(response.at("caption").get<std::string>());
}

std::vector<Triplet> triplets_from_response(const json& response) {
  validate_response(TaskKind::parse_triplets, response);
  std::vector<Triplet> out;
  for (const auto& t : response.at("triplets")) {
    Triplet tr;
    tr.subject = to_lower(trim(t.at("subject").get<std::string>()));
    tr.relation = to_lower(trim(t.at("relation").get<std::string>()));
    tr.object = to_lower(trim(t.at("object").get<std::string>()));
    out.push_back(std::move(tr));
  }
  return out;
}

CorefMap coref_from_response(const json& response) {
  validate_response(TaskKind::coref, response);
  CorefMap out;
  for (const auto& [mention, canonical] : response.at("map").items()) {
    out[to_lower(mention)] = to_lower(canonical.get<std::string>());
  }
  return out;
}

// ---- prompt director and focuser ---------------------------------------------------

PromptResult build_grounding_prompt(const DataWindow& window, const FrameRef& frame, const PromptConfig& config) {
  const auto* tags = window.payload<TagList>(slots::tags);
  if (tags == nullptr) throw Error("missing-slot", "grounding needs the tags slot", window.window_id());
  GroundingPrompt prompt;
  prompt.frame = frame;
  std::set<std::string> seen;
  auto add = [&](const std::string& phrase) {
    auto p = trim(phrase);
    if (!p.empty() && seen.insert(to_lower(p)).second) prompt.phrases.push_back(std::move(p));
  };
  for (const auto& t : tags->items) {
    if (same_frame(t.frame, frame)) add(t.label);
  }
  if (config.include_ocr) {
    if (const auto* ocr = window.payload<OcrSpans>(slots::ocr)) {
      for (const auto& s : ocr->items) {
        if (same_frame(s.frame, frame)) add(s.text);
      }
    }
  }
  PromptResult out;
  if (prompt.phrases.empty()) {
    out.fallback = true;
  } else {
    out.prompt = std::move(prompt);
  }
  return out;
}

PixelRect padded_rect(const Box& box, int width, int height, double pad) {
  constexpr double eps = 1e-6;
  auto lo = [&](double v, int n) { return std::clamp(static_cast<int>(std::floor((v - pad) * n + eps)), 0, n); };
  auto hi = [&](double v, int n) { return std::clamp(static_cast<int>(std::ceil((v + pad) * n - eps)), 0, n); };
  PixelRect r{lo(box.x0, width), lo(box.y0, height), hi(box.x1, width), hi(box.y1, height)};
  if (r.x1 < r.x0) r.x1 = r.x0;
  if (r.y1 < r.y0) r.y1 = r.y0;
  return r;
}

std::vector<FocusedCrop> focus_crops(const ImageBuffer& frame, const FrameRef& ref,
                                     const std::vector<Detection>& detections, const FocusConfig& config,
                                     const WarningSink& on_warning) {
  if (frame.empty()) throw Error("zero-area-image", "cannot crop an empty frame", frame_key(ref));
  std::vector<FocusedCrop> out;
  out.push_back(FocusedCrop{CropSpec{ref, Box::whole(), 0}, PixelRect{0, 0, frame.width(), frame.height()}, frame});
  for (const auto& d : detections) {
    if (!d.box.valid()) throw Error("invalid-detection", "detection box is not normalized", frame_key(ref));
    const auto rect = padded_rect(d.box, frame.width(), frame.height(), config.pad);
    if (rect.area() < config.min_area_px) {
      if (on_warning) on_warning("skipping degenerate crop of '" + d.label + "' in " + frame_key(ref));
      continue;
    }
    const double w = frame.width();
    const double h = frame.height();
    CropSpec spec{ref, Box{rect.x0 / w, rect.y0 / h, rect.x1 / w, rect.y1 / h}, out.size()};
    out.push_back(FocusedCrop{spec, rect, crop(frame, rect)});
  }
  return out;
}

// ---- recipe pipes ----------------------------------------------------------------

TranscriptDocument transcribe(const AdapterClient& client, const std::string& video_id, const std::string& media) {
  auto resp = client.call(make_request(TaskKind::transcribe, {{"media", media}}));
  return TranscriptDocument{video_id, words_from_response(resp)};
}

namespace {

struct KeyframeImage {
  FrameRef ref;
  std::shared_ptr<const ImageBuffer> image;
};

std::vector<KeyframeImage> keyframe_images(const DataWindow& w) {
  const auto* sel = w.payload<KeyframeSelection>(slots::keyframes);
  if (sel == nullptr) throw Error("missing-slot", "keyframes slot required", w.window_id());
  std::vector<KeyframeImage> out;
  for (const auto& kf : sel->keyframes) {
    const auto* frame = w.find_frame(kf.frame.frame_index);
    if (frame == nullptr || !frame->image.has_pixels()) {
      throw Error("missing-pixels", "keyframe has no image", frame_key(kf.frame));
    }
    out.push_back(KeyframeImage{frame->ref, frame->image.load()});
  }
  return out;
}

json image_request(TaskKind task, const AdapterClient& client, const ImageBuffer& image, json extra = json::object()) {
  extra["image"] = image_ref(image, client.endpoint().inline_pixels);
  return make_request(task, std::move(extra));
}

Pipe per_keyframe_pipe(std::string name, std::vector<std::string> reads, std::string writes,
                       std::function<DataWindow(DataWindow, const std::vector<KeyframeImage>&)> body) {
  Pipe p;
  p.name = std::move(name);
  p.reads = std::move(reads);
  p.writes = {std::move(writes)};
  p.transform = [body = std::move(body)](DataWindow w) {
    const auto frames = keyframe_images(w);
    return body(std::move(w), frames);
  };
  return p;
}

struct CaptionUnit {
  CropSpec spec;
  ImageBuffer image;
};

}  // namespace

Pipe tag_pipe(AdapterClient client) {
  return per_keyframe_pipe("tag", {slots::keyframes}, slots::tags, [client](DataWindow w, const auto& frames) {
    TagList out;
    for (const auto& f : frames) {
      for (auto& t : tags_from_response(client.call(image_request(TaskKind::tag, client, *f.image)), f.ref)) {
        out.items.push_back(std::move(t));
      }
    }
    return std::move(w).with_slot(make_slot(slots::tags, std::move(out), "tag"));
  });
}

Pipe ocr_pipe(AdapterClient client) {
  return per_keyframe_pipe("ocr", {slots::keyframes}, slots::ocr, [client](DataWindow w, const auto& frames) {
    OcrSpans out;
    for (const auto& f : frames) {
      for (auto& s : ocr_from_response(client.call(image_request(TaskKind::ocr, client, *f.image)), f.ref)) {
        out.items.push_back(std::move(s));
      }
    }
    return std::move(w).with_slot(make_slot(slots::ocr, std::move(out), "ocr"));
  });
}

Pipe grounding_pipe(AdapterClient client, PromptConfig config) {
  std::vector<std::string> reads{slots::keyframes, slots::tags};
  if (config.include_ocr) reads.emplace_back(slots::ocr);
  return per_keyframe_pipe("ground", std::move(reads), slots::detections,
                           [client, config](DataWindow w, const auto& frames) {
                             Detections out;
                             for (const auto& f : frames) {
                               const auto prompt = build_grounding_prompt(w, f.ref, config);
                               if (prompt.fallback) {
                                 out.fallback_frames.push_back(f.ref);
                                 continue;
                               }
                               auto req = image_request(TaskKind::ground, client, *f.image,
                                                        json{{"phrases", prompt.prompt->phrases}});
                               for (auto& d : detections_from_response(client.call(req), f.ref)) {
                                 out.items.push_back(std::move(d));
                               }
                             }
                             return std::move(w).with_slot(make_slot(slots::detections, std::move(out), "ground"));
                           });
}

Pipe caption_pipe(AdapterClient client, FocusConfig config) {
  auto splitter = [config](const DataWindow& w) {
    std::vector<CaptionUnit> units;
    const auto* dets = w.payload<Detections>(slots::detections);
    for (const auto& f : keyframe_images(w)) {
      std::vector<Detection> mine;
      if (dets != nullptr) {
        for (const auto& d : dets->items) {
          if (same_frame(d.frame, f.ref)) mine.push_back(d);
        }
      }
      for (auto& c : focus_crops(*f.image, f.ref, mine, config)) units.push_back(CaptionUnit{c.spec, std::move(c.image)});
    }
    return units;
  };
  auto map_branch = [client](const BranchUnit<CaptionUnit>& u) {
    const auto text = caption_from_response(client.call(image_request(TaskKind::caption, client, u.value.image)));
    std::optional<Box> crop_box;
    if (u.value.spec.branch_index != 0) crop_box = u.value.spec.box;
    return Caption{u.value.spec.source, text, crop_box, u.value.spec.branch_index};
  };
  auto merger = [](DataWindow w, std::vector<Caption> caps) {
    Captions out;
    for (auto& c : caps) {
      if (!c.text.empty()) out.items.push_back(std::move(c));
    }
    return std::move(w).with_slot(make_slot(slots::captions, std::move(out), "caption"));
  };
  return branching_pipe<CaptionUnit, Caption>("caption", {slots::keyframes, slots::detections}, {slots::captions},
                                              splitter, map_branch, merger);
}

Pipe parse_triplets_pipe(AdapterClient client) {
  Pipe p;
  p.name = "parse_triplets";
  p.reads = {slots::captions};
  p.writes = {slots::parsed_triplets};
  p.transform = [client](DataWindow w) {
    TripletList out;
    if (const auto* caps = w.payload<Captions>(slots::captions)) {
      for (const auto& para : merge_captions(*caps)) {
        for (std::size_t s = 0; s < para.sentences.size(); ++s) {
          auto req = make_request(TaskKind::parse_triplets, {{"sentence", para.sentences[s]}});
          for (auto& t : triplets_from_response(client.call(req))) {
            t.frame = para.frame;
            t.caption_index = para.caption_index[s];
            out.items.push_back(std::move(t));
          }
        }
      }
    }
    return std::move(w).with_slot(make_slot(slots::parsed_triplets, std::move(out), "parse_triplets"));
  };
  return p;
}

Pipe coref_pipe(AdapterClient client) {
  Pipe p;
  p.name = "coref";
  p.reads = {slots::captions};
  p.writes = {slots::coref};
  p.transform = [client](DataWindow w) {
    json maps = json::object();
    if (const auto* caps = w.payload<Captions>(slots::captions)) {
      for (const auto& para : merge_captions(*caps)) {
        const auto map = coref_from_response(client.call(make_request(TaskKind::coref, {{"sentences", para.sentences}})));
        maps[frame_key(para.frame)] = map;
      }
    }
    return std::move(w).with_slot(make_slot(slots::coref, GenericPayload{std::move(maps)}, "coref"));
  };
  return p;
}

}  // namespace vkg
