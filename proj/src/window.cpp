#include "vkg/window.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>

#include "vkg/error.hpp"

namespace vkg {

namespace {

std::atomic<std::uint64_t> g_slot_sequence{0};

std::string strip_spaces(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<FrameRef> referenced_frames(const SlotPayload& payload) {
  std::vector<FrameRef> refs;
  std::visit(
      [&refs](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, KeyframeSelection>) {
          for (const auto& k : p.keyframes) refs.push_back(k.frame);
        } else if constexpr (std::is_same_v<T, GenericPayload>) {
          // untyped: nothing to check
        } else {
          for (const auto& item : p.items) refs.push_back(item.frame);
          if constexpr (std::is_same_v<T, Detections>) {
            refs.insert(refs.end(), p.fallback_frames.begin(), p.fallback_frames.end());
          }
        }
      },
      payload);
  return refs;
}

InferenceSlot make_slot(std::string key, SlotPayload payload, std::string producer) {
  return InferenceSlot{std::move(key), std::move(payload), std::move(producer),
                       g_slot_sequence.fetch_add(1, std::memory_order_relaxed) + 1};
}

std::string make_window_id(const std::string& video_id, std::uint32_t window_index) {
  return video_id + "/w" + std::to_string(window_index);
}

const InferenceSlot* DataWindow::find_slot(const std::string& key) const {
  const auto it = slots_.find(key);
  return it == slots_.end() ? nullptr : &it->second;
}

const WindowFrame* DataWindow::find_frame(std::uint64_t frame_index) const {
  const auto it = std::lower_bound(frames_.begin(), frames_.end(), frame_index,
                                   [](const WindowFrame& f, std::uint64_t idx) {
                                     return f.ref.frame_index < idx;
                                   });
  return (it != frames_.end() && it->ref.frame_index == frame_index) ? &*it : nullptr;
}

bool DataWindow::contains_frame(const FrameRef& ref) const {
  const auto* f = find_frame(ref.frame_index);
  return f != nullptr && same_frame(f->ref, ref);
}

void DataWindow::put(InferenceSlot slot) {
  for (const auto& ref : referenced_frames(slot.payload)) {
    if (!contains_frame(ref)) {
      throw Error("foreign-frame-ref",
                  "slot '" + slot.key + "' references frame " + ref.video_id + "#" +
                      std::to_string(ref.frame_index) + " outside the window",
                  window_id_);
    }
  }
  const auto it = slots_.find(slot.key);
  if (it != slots_.end() && it->second.producer != slot.producer) {
    throw Error("key-collision-different-producer",
                "slot '" + slot.key + "' is owned by '" + it->second.producer +
                    "', rejected write from '" + slot.producer + "'",
                window_id_);
  }
  if (slot.produced_at == 0) slot.produced_at = g_slot_sequence.fetch_add(1) + 1;
  slots_.insert_or_assign(slot.key, std::move(slot));
}

DataWindow DataWindow::with_slot(InferenceSlot slot) const& {
  DataWindow copy = *this;
  copy.put(std::move(slot));
  return copy;
}

DataWindow DataWindow::with_slot(InferenceSlot slot) && {
  put(std::move(slot));
  return std::move(*this);
}

bool operator==(const DataWindow& a, const DataWindow& b) {
  if (a.window_id_ != b.window_id_ || a.video_id_ != b.video_id_ ||
      a.window_index_ != b.window_index_ || a.transcript_ != b.transcript_ ||
      a.slots_ != b.slots_ || a.frames_.size() != b.frames_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.frames_.size(); ++i) {
    if (a.frames_[i].ref != b.frames_[i].ref) return false;
  }
  return true;
}

DataWindow new_window(std::string video_id, std::uint32_t window_index,
                      std::vector<WindowFrame> frames, TranscriptSegment transcript) {
  const std::string id = make_window_id(video_id, window_index);
  if (frames.empty() && transcript.empty()) {
    throw Error("empty-window", "window has neither frames nor transcript", id);
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& ref = frames[i].ref;
    if (ref.video_id != video_id || ref.window_index != window_index) {
      throw Error("foreign-frame-ref", "frame belongs to another video or window", id);
    }
    if (ref.timestamp < 0.0) throw Error("unordered-frames", "negative frame timestamp", id);
    if (i > 0) {
      const auto& prev = frames[i - 1].ref;
      if (ref.frame_index <= prev.frame_index || ref.timestamp < prev.timestamp) {
        throw Error("unordered-frames",
                    "frame " + std::to_string(ref.frame_index) + " does not follow frame " +
                        std::to_string(prev.frame_index),
                    id);
      }
    }
  }
  for (std::size_t i = 0; i < transcript.words.size(); ++i) {
    const auto& w = transcript.words[i];
    if (w.start > w.end || (i > 0 && w.start < transcript.words[i - 1].start)) {
      throw Error("invalid-transcript", "word timings are not non-decreasing", id);
    }
  }
  if (!transcript.empty()) {
    constexpr double kSlack = 1e-9;
    for (const auto& f : frames) {
      if (f.ref.timestamp < transcript.start - kSlack || f.ref.timestamp > transcript.end + kSlack) {
        throw Error("frame-outside-transcript",
                    "frame " + std::to_string(f.ref.frame_index) + " lies outside the transcript span",
                    id);
      }
    }
  }
  if (!transcript.words.empty()) {
    std::string joined;
    for (const auto& w : transcript.words) joined += w.surface;
    if (strip_spaces(joined) != strip_spaces(transcript.text)) {
      throw Error("invalid-transcript", "word surfaces do not reconstruct the transcript text", id);
    }
  }

  DataWindow w;
  w.window_id_ = id;
  w.video_id_ = std::move(video_id);
  w.window_index_ = window_index;
  w.frames_ = std::move(frames);
  w.transcript_ = std::move(transcript);
  return w;
}

DataWindow put_slot(const DataWindow& window, InferenceSlot slot) {
  return window.with_slot(std::move(slot));
}

std::pair<double, double> window_span(const DataWindow& window) {
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;
  auto extend = [&](double a, double b) {
    if (!any) {
      lo = a;
      hi = b;
      any = true;
    } else {
      lo = std::min(lo, a);
      hi = std::max(hi, b);
    }
  };
  if (!window.transcript().empty()) extend(window.transcript().start, window.transcript().end);
  for (const auto& f : window.frames()) extend(f.ref.timestamp, f.ref.timestamp);
  return {lo, hi};
}

}  // namespace vkg
