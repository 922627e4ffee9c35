#include "vkg/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "vkg/error.hpp"
#include "vkg/text.hpp"

namespace vkg {

using nlohmann::json;

TranscriptDocument parse_transcript(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error("malformed-document", e.what());
  }
  if (!doc.is_object() || !doc.contains("words") || !doc["words"].is_array()) {
    throw Error("malformed-document", "expected an object with a 'words' array");
  }
  TranscriptDocument out;
  if (doc.contains("video_id")) {
    if (!doc["video_id"].is_string()) throw Error("malformed-document", "video_id must be a string");
    out.video_id = doc["video_id"].get<std::string>();
  }
  for (std::size_t i = 0; i < doc["words"].size(); ++i) {
    const auto& w = doc["words"][i];
    if (!w.is_object() || !w.contains("w") || !w["w"].is_string() || !w.contains("s") || !w["s"].is_number() ||
        !w.contains("e") || !w["e"].is_number()) {
      throw Error("malformed-document", "word " + std::to_string(i) + " needs string w and numeric s, e");
    }
    WordTiming t{w["w"].get<std::string>(), w["s"].get<double>(), w["e"].get<double>()};
    if (!std::isfinite(t.start) || !std::isfinite(t.end) || t.start < 0) {
      throw Error("malformed-document", "word " + std::to_string(i) + " has an invalid time");
    }
    if (t.start > t.end) {
      throw Error("non-monotonic-times", "word " + std::to_string(i) + " starts after it ends");
    }
    if (!out.words.empty() && t.start < out.words.back().start) {
      throw Error("non-monotonic-times", "word " + std::to_string(i) + " starts before its predecessor");
    }
    out.words.push_back(std::move(t));
  }
  return out;
}

std::string serialize_transcript(const TranscriptDocument& doc) {
  json words = json::array();
  for (const auto& w : doc.words) words.push_back({{"w", w.surface}, {"s", w.start}, {"e", w.end}});
  return json{{"video_id", doc.video_id}, {"words", words}}.dump();
}

Sentence make_sentence(std::vector<WordTiming> words) {
  Sentence s;
  for (const auto& w : words) {
    if (!s.text.empty()) s.text += ' ';
    s.text += w.surface;
  }
  if (!words.empty()) {
    s.start = words.front().start;
    s.end = words.back().end;
    for (const auto& w : words) s.end = std::max(s.end, w.end);
  }
  s.words = std::move(words);
  return s;
}

std::unordered_set<std::string> load_abbreviations(const std::filesystem::path& path) {
  std::unordered_set<std::string> out;
  for (auto& a : read_word_list(path)) out.insert(to_lower(a));
  return out;
}

std::unordered_set<std::string> load_abbreviations() { return load_abbreviations(data_path("abbreviations.txt")); }

namespace {

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}'; }
bool is_opener(char c) { return c == '"' || c == '\'' || c == '(' || c == '[' || c == '{'; }

bool ends_sentence(const std::string& surface, const std::unordered_set<std::string>& abbreviations) {
  std::string s = trim(surface);
  while (!s.empty() && is_closer(s.back())) s.pop_back();
  if (s.empty()) return false;
  const char last = s.back();
  if (last == '!' || last == '?') return true;
  if (last != '.') return false;
  std::size_t b = 0;
  while (b < s.size() && is_opener(s[b])) ++b;
  return abbreviations.count(to_lower(s.substr(b))) == 0;
}

}  // namespace

std::vector<Sentence> segment_sentences(const std::vector<WordTiming>& words,
                                        const std::unordered_set<std::string>& abbreviations) {
  std::vector<Sentence> out;
  std::vector<WordTiming> cur;
  for (const auto& w : words) {
    cur.push_back(w);
    if (ends_sentence(w.surface, abbreviations)) {
      out.push_back(make_sentence(std::move(cur)));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(make_sentence(std::move(cur)));
  return out;
}

std::vector<Sentence> segment_sentences(const std::vector<WordTiming>& words) {
  static const auto abbreviations = load_abbreviations();
  return segment_sentences(words, abbreviations);
}

namespace {

std::map<std::string, double> term_counts(std::string_view text) {
  const auto& stop = default_stopwords();
  std::map<std::string, double> tf;
  for (auto& t : word_tokens(text)) {
    if (stop.count(t) == 0) tf[t] += 1.0;
  }
  return tf;
}

double cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0, na = 0, nb = 0;
  for (const auto& [k, v] : a) {
    na += v * v;
    if (auto it = b.find(k); it != b.end()) dot += v * it->second;
  }
  for (const auto& [k, v] : b) nb += v * v;
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

}  // namespace

double tf_cosine(std::string_view a, std::string_view b) { return cosine(term_counts(a), term_counts(b)); }

double coherency_score(const std::vector<Sentence>& context, const Sentence& candidate) {
  if (context.empty()) throw Error("empty-context", "coherency needs at least one context sentence");
  std::string joined;
  for (const auto& s : context) {
    joined += s.text;
    joined += ' ';
  }
  return tf_cosine(joined, candidate.text);
}

void validate(const SegmenterConfig& config) {
  if (!(config.coherency_threshold >= 0.0)) throw Error("invalid-config", "coherency_threshold must be >= 0");
  if (config.max_sentences_per_paragraph == 0) throw Error("invalid-config", "max_sentences_per_paragraph must be > 0");
  if (!(config.max_paragraph_duration > 0.0)) throw Error("invalid-config", "max_paragraph_duration must be > 0");
}

TranscriptSegment Paragraph::as_transcript() const {
  TranscriptSegment t;
  for (const auto& s : sentences) {
    if (!t.text.empty()) t.text += ' ';
    t.text += s.text;
    t.words.insert(t.words.end(), s.words.begin(), s.words.end());
  }
  t.start = start;
  t.end = end;
  return t;
}

std::vector<Paragraph> build_paragraphs(const std::vector<Sentence>& sentences, const SegmenterConfig& config,
                                        const CoherencyScorer& scorer) {
  validate(config);
  auto score_against = [&](const Paragraph& p, const Sentence& s) {
    if (config.context == ParagraphContext::whole_paragraph) return scorer(p.sentences, s);
    return scorer({p.sentences.back()}, s);
  };
  std::vector<Paragraph> out;
  for (const auto& s : sentences) {
    if (!out.empty()) {
      auto& p = out.back();
      const bool fits = p.sentences.size() < config.max_sentences_per_paragraph &&
                        std::max(p.end, s.end) - p.start <= config.max_paragraph_duration;
      if (fits && score_against(p, s) >= config.coherency_threshold) {
        p.sentences.push_back(s);
        p.end = std::max(p.end, s.end);
        continue;
      }
    }
    out.push_back(Paragraph{{s}, s.start, s.end});
  }
  return out;
}

FrameSampler uniform_sampler(double sample_fps) {
  if (!(sample_fps > 0)) throw Error("invalid-config", "sample fps must be positive");
  return [sample_fps](const VideoHandle& video, std::uint32_t window_index, double start, double end) {
    constexpr double kEps = 1e-9;
    std::vector<WindowFrame> frames;
    if (!(video.fps > 0)) return frames;
    auto k = static_cast<long long>(std::ceil(start * sample_fps - kEps));
    for (;; ++k) {
      const double t = static_cast<double>(k) / sample_fps;
      if (t >= end - kEps) break;
      const auto index = static_cast<std::uint64_t>(std::ceil(t * video.fps - kEps));
      const double ts = static_cast<double>(index) / video.fps;
      if (ts >= end - kEps) break;
      if (video.frame_count > 0 && index >= video.frame_count) break;
      if (!frames.empty() && frames.back().ref.frame_index == index) continue;
      frames.push_back(WindowFrame{FrameRef{video.video_id, window_index, index, ts},
                                   video.frame_image ? video.frame_image(index) : FrameImage{}});
    }
    return frames;
  };
}

WindowGenerator::WindowGenerator(VideoHandle video, std::vector<Paragraph> paragraphs, FrameSampler sampler,
                                 double max_silent_duration, WarningSink on_warning)
    : video_(std::move(video)),
      paragraphs_(std::move(paragraphs)),
      sampler_(std::move(sampler)),
      warn_(std::move(on_warning)) {
  if (!(max_silent_duration > 0)) throw Error("invalid-config", "max_silent_duration must be positive");
  const bool bounded = video_.frame_count > 0 && video_.fps > 0;
  const double duration = video_.duration();
  auto add_silence = [&](double from, double to) {
    for (double t = from; t < to - 1e-9; t += max_silent_duration) {
      spans_.push_back(Span{t, std::min(to, t + max_silent_duration), std::nullopt});
    }
  };
  double cursor = 0.0;
  for (std::size_t i = 0; i < paragraphs_.size(); ++i) {
    auto& p = paragraphs_[i];
    double s = p.start;
    double e = p.end;
    if (bounded && (s < 0 || e > duration)) {
      if (warn_) {
        warn_("paragraph " + std::to_string(i) + " span [" + std::to_string(s) + ", " + std::to_string(e) +
              "] clamped to video duration " + std::to_string(duration));
      }
      s = std::clamp(s, 0.0, duration);
      e = std::clamp(e, s, duration);
    }
    if (bounded && s > cursor) add_silence(cursor, s);
    spans_.push_back(Span{s, e, i});
    cursor = std::max(cursor, e);
  }
  if (bounded && duration > cursor) add_silence(cursor, duration);
}

std::optional<DataWindow> WindowGenerator::next() {
  while (cursor_ < spans_.size()) {
    const auto span = spans_[cursor_++];
    auto frames = sampler_(video_, next_index_, span.start, span.end);
    if (!span.paragraph && frames.empty()) continue;
    TranscriptSegment transcript;
    if (span.paragraph) {
      transcript = paragraphs_[*span.paragraph].as_transcript();
      transcript.start = span.start;
      transcript.end = span.end;
    }
    return new_window(video_.video_id, next_index_++, std::move(frames), std::move(transcript));
  }
  return std::nullopt;
}

WindowSource WindowGenerator::as_source() {
  return [this]() { return next(); };
}

std::vector<DataWindow> generate_windows(const VideoHandle& video, const std::vector<Paragraph>& paragraphs,
                                         const FrameSampler& sampler, double max_silent_duration,
                                         const WarningSink& on_warning) {
  WindowGenerator gen(video, paragraphs, sampler, max_silent_duration, on_warning);
  std::vector<DataWindow> out;
  while (auto w = gen.next()) out.push_back(std::move(*w));
  return out;
}

}  // namespace vkg
