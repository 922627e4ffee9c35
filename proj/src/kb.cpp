#include "vkg/kb.hpp"

#include <algorithm>
#include <cmath>

#include "vkg/error.hpp"
#include "vkg/hash.hpp"
#include "vkg/slots.hpp"
#include "vkg/text.hpp"

namespace vkg {

using ojson = nlohmann::ordered_json;

namespace {

void collect_stages(const PipelineSpec& spec, std::vector<std::string>& out) {
  for (const auto& child : spec.children) {
    if (const auto* pipe = std::get_if<Pipe>(&child.node)) {
      out.push_back(pipe->name);
    } else {
      collect_stages(*std::get<std::shared_ptr<const PipelineSpec>>(child.node), out);
    }
  }
}

std::string ctx(std::uint32_t window, std::optional<std::uint64_t> frame = std::nullopt) {
  std::string s = "w" + std::to_string(window);
  if (frame) s += "/f" + std::to_string(*frame);
  return s;
}

[[noreturn]] void invalid(const std::string& what, const std::string& where) {
  throw Error("kb-validation-error", what + " at " + where, where);
}

void check_confidence(double c, const std::string& where) {
  if (!std::isfinite(c) || c < 0.0 || c > 1.0) invalid("confidence outside [0,1]", where);
}

void check_box(const Box& b, const std::string& where) {
  if (!std::isfinite(b.x0) || !std::isfinite(b.y0) || !std::isfinite(b.x1) || !std::isfinite(b.y1) || !b.valid()) {
    invalid("box outside the unit square or with x0>=x1 / y0>=y1", where);
  }
}

ojson box_json(const Box& b) { return ojson::array({b.x0, b.y0, b.x1, b.y1}); }

Box box_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("kb-parse-error", "box must be [x0,y0,x1,y1]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

PipelineFingerprint fingerprint_of(const PipelineSpec& spec, const nlohmann::json& config) {
  PipelineFingerprint fp;
  collect_stages(spec, fp.stages);
  fp.config_hash = sha256_hex(config.dump());
  return fp;
}

WindowRecord window_record(const DataWindow& window) {
  const auto* selection = window.payload<KeyframeSelection>(slots::keyframes);
  if (selection == nullptr) {
    throw Error("missing-keyframes-slot", "window has no keyframes slot", window.window_id());
  }
  const auto* tags = window.payload<TagList>(slots::tags);
  const auto* ocr = window.payload<OcrSpans>(slots::ocr);
  const auto* dets = window.payload<Detections>(slots::detections);
  const auto* caps = window.payload<Captions>(slots::captions);
  const auto* trips = window.payload<TripletList>(slots::triplets);

  WindowRecord rec;
  rec.index = window.window_index();
  rec.transcript.text = window.transcript().text;
  rec.transcript.start = window.transcript().start;
  rec.transcript.end = window.transcript().end;
  for (const auto& kf : selection->keyframes) {
    FrameRecord fr;
    fr.frame = kf.frame;
    auto mine = [&](const FrameRef& r) { return same_frame(r, kf.frame); };
    if (tags) {
      for (const auto& t : tags->items) {
        if (mine(t.frame)) fr.tags.push_back(t);
      }
    }
    if (ocr) {
      for (const auto& o : ocr->items) {
        if (mine(o.frame)) fr.ocr.push_back(o);
      }
    }
    if (dets) {
      for (const auto& d : dets->items) {
        if (mine(d.frame)) fr.detections.push_back(d);
      }
    }
    std::vector<std::size_t> window_caption_index;
    if (caps) {
      for (std::size_t i = 0; i < caps->items.size(); ++i) {
        if (mine(caps->items[i].frame)) {
          fr.captions.push_back(caps->items[i]);
          window_caption_index.push_back(i);
        }
      }
    }
    if (trips) {
      for (auto t : trips->items) {
        if (!mine(t.frame)) continue;
        auto it = std::find(window_caption_index.begin(), window_caption_index.end(), t.caption_index);
        t.caption_index = it == window_caption_index.end() ? 0 : static_cast<std::size_t>(it - window_caption_index.begin());
        fr.triplets.push_back(std::move(t));
      }
    }
    // items carry the keyframe's ref exactly
    for (auto& t : fr.tags) t.frame = fr.frame;
    for (auto& o : fr.ocr) o.frame = fr.frame;
    for (auto& d : fr.detections) d.frame = fr.frame;
    for (auto& c : fr.captions) c.frame = fr.frame;
    for (auto& t : fr.triplets) t.frame = fr.frame;
    rec.keyframes.push_back(std::move(fr));
  }
  return rec;
}

void validate_kb(const VideoKnowledgeBase& kb) {
  if (kb.version != kKbSchemaVersion) {
    throw Error("schema-version-mismatch",
                "KB schema version " + std::to_string(kb.version) + " is not " + std::to_string(kKbSchemaVersion));
  }
  if (kb.video_id.empty()) invalid("empty video_id", "kb");
  for (std::size_t w = 0; w < kb.windows.size(); ++w) {
    const auto& win = kb.windows[w];
    if (win.index != w) invalid("window indices must be contiguous from 0", ctx(static_cast<std::uint32_t>(w)));
    const auto& tr = win.transcript;
    if (!std::isfinite(tr.start) || !std::isfinite(tr.end) || tr.start > tr.end) {
      invalid("transcript span is not ordered", ctx(win.index));
    }
    if (win.dropped && !win.keyframes.empty()) invalid("dropped window with keyframes", ctx(win.index));
    std::optional<std::uint64_t> prev;
    for (const auto& fr : win.keyframes) {
      const auto where = ctx(win.index, fr.frame.frame_index);
      if (fr.frame.video_id != kb.video_id || fr.frame.window_index != win.index) invalid("foreign frame ref", where);
      if (prev && fr.frame.frame_index <= *prev) invalid("keyframes out of frame order", where);
      prev = fr.frame.frame_index;
      if (!std::isfinite(fr.frame.timestamp)) invalid("non-finite timestamp", where);
      if (tr.end > tr.start && (fr.frame.timestamp < tr.start - 1e-9 || fr.frame.timestamp > tr.end + 1e-9)) {
        invalid("keyframe outside the window span", where);
      }
      for (const auto& t : fr.tags) {
        if (t.label.empty()) invalid("empty tag label", where);
        check_confidence(t.confidence, where);
      }
      for (const auto& o : fr.ocr) {
        if (o.box) check_box(*o.box, where);
        check_confidence(o.confidence, where);
      }
      for (const auto& d : fr.detections) {
        if (d.label.empty()) invalid("empty detection label", where);
        check_box(d.box, where);
        check_confidence(d.confidence, where);
      }
      for (const auto& c : fr.captions) {
        if (c.crop) check_box(*c.crop, where);
      }
      for (const auto& t : fr.triplets) {
        if (t.subject.empty() || t.relation.empty() || t.object.empty()) invalid("incomplete triplet", where);
        if (t.caption_index >= std::max<std::size_t>(fr.captions.size(), 1)) invalid("triplet caption index", where);
      }
      auto same = [&](const FrameRef& r) { return r == fr.frame; };
      const bool refs_ok = std::all_of(fr.tags.begin(), fr.tags.end(), [&](auto& x) { return same(x.frame); }) &&
                           std::all_of(fr.ocr.begin(), fr.ocr.end(), [&](auto& x) { return same(x.frame); }) &&
                           std::all_of(fr.detections.begin(), fr.detections.end(), [&](auto& x) { return same(x.frame); }) &&
                           std::all_of(fr.captions.begin(), fr.captions.end(), [&](auto& x) { return same(x.frame); }) &&
                           std::all_of(fr.triplets.begin(), fr.triplets.end(), [&](auto& x) { return same(x.frame); });
      if (!refs_ok) invalid("item frame ref differs from its keyframe", where);
    }
  }
}

ojson kb_to_json(const VideoKnowledgeBase& kb) {
  ojson doc;
  doc["version"] = kb.version;
  doc["video_id"] = kb.video_id;
  doc["fingerprint"] = ojson{{"stages", kb.fingerprint.stages}, {"config_hash", kb.fingerprint.config_hash}};
  doc["created_at"] = kb.created_at;
  ojson windows = ojson::array();
  for (const auto& w : kb.windows) {
    ojson jw;
    jw["index"] = w.index;
    jw["transcript"] = ojson{{"text", w.transcript.text}, {"start", w.transcript.start}, {"end", w.transcript.end}};
    if (w.dropped) jw["dropped"] = true;
    ojson keyframes = ojson::array();
    for (const auto& f : w.keyframes) {
      ojson jf;
      jf["frame_index"] = f.frame.frame_index;
      jf["t"] = f.frame.timestamp;
      jf["ocr"] = ojson::array();
      for (const auto& o : f.ocr) {
        ojson jo{{"text", o.text}};
        if (o.box) jo["box"] = box_json(*o.box);
        jo["confidence"] = o.confidence;
        jf["ocr"].push_back(std::move(jo));
      }
      jf["tags"] = ojson::array();
      for (const auto& t : f.tags) jf["tags"].push_back(ojson{{"label", t.label}, {"confidence", t.confidence}});
      jf["detections"] = ojson::array();
      for (const auto& d : f.detections) {
        jf["detections"].push_back(ojson{{"label", d.label}, {"box", box_json(d.box)}, {"confidence", d.confidence}});
      }
      jf["captions"] = ojson::array();
      for (const auto& c : f.captions) {
        ojson jc{{"text", c.text}};
        if (c.crop) jc["crop"] = box_json(*c.crop);
        jc["branch"] = c.branch_index;
        jf["captions"].push_back(std::move(jc));
      }
      jf["triplets"] = ojson::array();
      for (const auto& t : f.triplets) {
        jf["triplets"].push_back(ojson{
            {"subject", t.subject}, {"relation", t.relation}, {"object", t.object}, {"caption", t.caption_index}});
      }
      keyframes.push_back(std::move(jf));
    }
    jw["keyframes"] = std::move(keyframes);
    windows.push_back(std::move(jw));
  }
  doc["windows"] = std::move(windows);
  return doc;
}

VideoKnowledgeBase kb_from_json(const nlohmann::json& doc) {
  VideoKnowledgeBase kb;
  try {
    if (!doc.is_object()) throw Error("kb-parse-error", "KB document must be an object");
    kb.version = doc.at("version").get<int>();
    if (kb.version != kKbSchemaVersion) {
      throw Error("schema-version-mismatch",
                  "KB schema version " + std::to_string(kb.version) + " is not " + std::to_string(kKbSchemaVersion));
    }
    kb.video_id = doc.at("video_id").get<std::string>();
    kb.fingerprint.stages = doc.at("fingerprint").at("stages").get<std::vector<std::string>>();
    kb.fingerprint.config_hash = doc.at("fingerprint").at("config_hash").get<std::string>();
    kb.created_at = doc.at("created_at").get<std::string>();
    for (const auto& jw : doc.at("windows")) {
      WindowRecord w;
      w.index = jw.at("index").get<std::uint32_t>();
      w.transcript.text = jw.at("transcript").at("text").get<std::string>();
      w.transcript.start = jw.at("transcript").at("start").get<double>();
      w.transcript.end = jw.at("transcript").at("end").get<double>();
      w.dropped = jw.value("dropped", false);
      for (const auto& jf : jw.at("keyframes")) {
        FrameRecord f;
        f.frame = FrameRef{kb.video_id, w.index, jf.at("frame_index").get<std::uint64_t>(), jf.at("t").get<double>()};
        for (const auto& jo : jf.at("ocr")) {
          OcrSpan o;
          o.frame = f.frame;
          o.text = jo.at("text").get<std::string>();
          if (jo.contains("box")) o.box = box_from(jo["box"]);
          o.confidence = jo.at("confidence").get<double>();
          f.ocr.push_back(std::move(o));
        }
        for (const auto& jt : jf.at("tags")) {
          f.tags.push_back(Tag{f.frame, jt.at("label").get<std::string>(), jt.at("confidence").get<double>()});
        }
        for (const auto& jd : jf.at("detections")) {
          f.detections.push_back(Detection{f.frame, jd.at("label").get<std::string>(), box_from(jd.at("box")),
                                           jd.at("confidence").get<double>()});
        }
        for (const auto& jc : jf.at("captions")) {
          Caption c;
          c.frame = f.frame;
          c.text = jc.at("text").get<std::string>();
          if (jc.contains("crop")) c.crop = box_from(jc["crop"]);
          c.branch_index = jc.at("branch").get<std::size_t>();
          f.captions.push_back(std::move(c));
        }
        for (const auto& jt : jf.at("triplets")) {
          Triplet t;
          t.subject = jt.at("subject").get<std::string>();
          t.relation = jt.at("relation").get<std::string>();
          t.object = jt.at("object").get<std::string>();
          t.frame = f.frame;
          t.caption_index = jt.at("caption").get<std::size_t>();
          f.triplets.push_back(std::move(t));
        }
        w.keyframes.push_back(std::move(f));
      }
      kb.windows.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("kb-parse-error", std::string("malformed KB document: ") + e.what());
  }
  validate_kb(kb);
  return kb;
}

std::string serialize_kb(const VideoKnowledgeBase& kb) { return kb_to_json(kb).dump(2) + "\n"; }

VideoKnowledgeBase parse_kb(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("kb-parse-error", std::string("KB is not valid JSON: ") + e.what());
  }
  return kb_from_json(doc);
}

VideoKnowledgeBase load_kb(const std::filesystem::path& path) { return parse_kb(read_file(path)); }

void save_kb(const VideoKnowledgeBase& kb, const std::filesystem::path& path) {
  validate_kb(kb);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, serialize_kb(kb));
}

KbWriter::KbWriter(std::string video_id, PipelineFingerprint fingerprint, std::string created_at,
                   std::optional<std::filesystem::path> path)
    : path_(std::move(path)) {
  kb_.video_id = std::move(video_id);
  kb_.fingerprint = std::move(fingerprint);
  kb_.created_at = std::move(created_at);
}

void KbWriter::check_order(std::uint32_t index) {
  if (index != next_) {
    throw Error("out-of-order-window",
                "expected window " + std::to_string(next_) + ", got " + std::to_string(index), ctx(index));
  }
}

void KbWriter::consume(const DataWindow& window) {
  if (window.video_id() != kb_.video_id) {
    throw Error("foreign-window", "window of video " + window.video_id() + " fed to KB of " + kb_.video_id,
                window.window_id());
  }
  check_order(window.window_index());
  kb_.windows.push_back(window_record(window));
  ++next_;
}

void KbWriter::skip(std::uint32_t window_index) {
  check_order(window_index);
  WindowRecord rec;
  rec.index = window_index;
  rec.dropped = true;
  kb_.windows.push_back(std::move(rec));
  ++next_;
}

VideoKnowledgeBase KbWriter::finish() {
  if (path_) {
    save_kb(kb_, *path_);
  } else {
    validate_kb(kb_);
  }
  return kb_;
}

VideoKnowledgeBase ingest_to_kb(const PipelineSpec& spec, WindowSource source, const std::string& video_id,
                                const PipelineFingerprint& fingerprint, const std::string& created_at,
                                const std::optional<std::filesystem::path>& path,
                                std::vector<StageFailure>* failures) {
  auto result = run_pipeline(spec, std::move(source));
  KbWriter writer(video_id, fingerprint, created_at, path);
  std::sort(result.failures.begin(), result.failures.end(),
            [](const auto& a, const auto& b) { return a.window_index < b.window_index; });
  std::size_t f = 0;
  for (const auto& w : result.windows) {
    while (f < result.failures.size() && result.failures[f].window_index < w.window_index()) {
      writer.skip(result.failures[f++].window_index);
    }
    writer.consume(w);
  }
  while (f < result.failures.size()) writer.skip(result.failures[f++].window_index);
  if (failures != nullptr) *failures = result.failures;
  return writer.finish();
}

}  // namespace vkg
