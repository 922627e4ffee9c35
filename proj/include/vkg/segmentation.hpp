#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vkg/image.hpp"
#include "vkg/pipeline.hpp"
#include "vkg/window.hpp"

namespace vkg {

struct TranscriptDocument {
  std::string video_id;
  std::vector<WordTiming> words;
};

/// {"video_id": "...", "words": [{"w": "...", "s": 0.0, "e": 0.4}, ...]}
/// Errors: malformed-document, non-monotonic-times.
TranscriptDocument parse_transcript(std::string_view document);
std::string serialize_transcript(const TranscriptDocument& doc);

struct Sentence {
  std::string text;
  std::vector<WordTiming> words;
  double start = 0.0;
  double end = 0.0;
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

Sentence make_sentence(std::vector<WordTiming> words);

using SentenceSplitter = std::function<std::vector<Sentence>(const std::vector<WordTiming>&)>;

/// Lowercased abbreviations with their trailing period, e.g. "dr.".
std::unordered_set<std::string> load_abbreviations();
std::unordered_set<std::string> load_abbreviations(const std::filesystem::path& path);

std::vector<Sentence> segment_sentences(const std::vector<WordTiming>& words,
                                        const std::unordered_set<std::string>& abbreviations);
std::vector<Sentence> segment_sentences(const std::vector<WordTiming>& words);

using CoherencyScorer = std::function<double(const std::vector<Sentence>& context, const Sentence& candidate)>;

/// Cosine of term-frequency vectors (lowercased, stopwords removed).
double coherency_score(const std::vector<Sentence>& context, const Sentence& candidate);
double tf_cosine(std::string_view a, std::string_view b);

/// What the open paragraph contributes as scoring context for the next sentence.
enum class ParagraphContext {
  last_sentence,    ///< cut points depend on adjacent pairs only; paragraph count is monotone in theta
  whole_paragraph,  ///< all sentences accepted so far
};

struct SegmenterConfig {
  double coherency_threshold = 0.15;
  ParagraphContext context = ParagraphContext::last_sentence;
  std::size_t max_sentences_per_paragraph = 12;
  double max_paragraph_duration = 30.0;
};

void validate(const SegmenterConfig& config);

struct Paragraph {
  std::vector<Sentence> sentences;
  double start = 0.0;
  double end = 0.0;
  TranscriptSegment as_transcript() const;
};

std::vector<Paragraph> build_paragraphs(const std::vector<Sentence>& sentences, const SegmenterConfig& config,
                                        const CoherencyScorer& scorer = coherency_score);

/// Source video as seen by the generator: frame images are produced on demand.
struct VideoHandle {
  std::string video_id;
  double fps = 1.0;
  std::uint64_t frame_count = 0;
  std::function<FrameImage(std::uint64_t frame_index)> frame_image;
  double duration() const { return fps > 0 ? static_cast<double>(frame_count) / fps : 0.0; }
};

using FrameSampler =
    std::function<std::vector<WindowFrame>(const VideoHandle&, std::uint32_t window_index, double start, double end)>;

/// Uniform stride over the half-open span [start, end) at `sample_fps`.
FrameSampler uniform_sampler(double sample_fps);

using WarningSink = std::function<void(const std::string&)>;

/// Lazily yields one window per paragraph in order. Silent stretches (before,
/// between and after paragraphs) become transcript-less windows cut at
/// max_paragraph_duration; a silent chunk whose sampler returns no frames is skipped.
class WindowGenerator {
 public:
  WindowGenerator(VideoHandle video, std::vector<Paragraph> paragraphs, FrameSampler sampler,
                  double max_silent_duration = 30.0, WarningSink on_warning = {});

  std::optional<DataWindow> next();
  WindowSource as_source();

 private:
  struct Span {
    double start;
    double end;
    std::optional<std::size_t> paragraph;
  };
  VideoHandle video_;
  std::vector<Paragraph> paragraphs_;
  FrameSampler sampler_;
  WarningSink warn_;
  std::vector<Span> spans_;
  std::size_t cursor_ = 0;
  std::uint32_t next_index_ = 0;
};

std::vector<DataWindow> generate_windows(const VideoHandle& video, const std::vector<Paragraph>& paragraphs,
                                         const FrameSampler& sampler, double max_silent_duration = 30.0,
                                         const WarningSink& on_warning = {});

}  // namespace vkg
