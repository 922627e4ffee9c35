#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "vkg/kb.hpp"
#include "vkg/lexicon.hpp"

namespace vkg {

/// (window, frame) address of a keyframe inside a video's KB.
struct FrameKey {
  std::uint32_t window = 0;
  std::uint64_t frame = 0;
  friend bool operator==(const FrameKey&, const FrameKey&) = default;
  friend auto operator<=>(const FrameKey&, const FrameKey&) = default;
};

/// What one frame contributed to a node: source kinds ("tag", "caption",
/// "triplet", "detection", "ocr", "transcript", "classifier"), the words
/// and any detection boxes.
struct EvidenceInfo {
  double timestamp = 0.0;
  std::set<std::string> kinds;
  std::set<std::string> words;
  std::set<Box> boxes;
  friend bool operator==(const EvidenceInfo&, const EvidenceInfo&) = default;
};

using Evidence = std::map<FrameKey, EvidenceInfo>;

/// Per-key union.
void absorb(Evidence& into, const Evidence& from);
/// True when every key of `sub` is in `super` with subset kinds/words/boxes.
bool evidence_contains(const Evidence& super, const Evidence& sub);

struct SynsetNode {
  std::string synset_id;
  Evidence evidence;
  bool direct = false;
  friend bool operator==(const SynsetNode&, const SynsetNode&) = default;
};

using Edge = std::pair<std::string, std::string>;  // child -> parent

struct VideoKnowledgeGraph {
  std::string video_id;
  std::map<std::string, SynsetNode> nodes;
  std::set<Edge> edges;
  std::set<std::uint32_t> windows;  // windows that contributed evidence
  std::string lexicon_fingerprint;

  bool empty() const { return nodes.empty(); }
  const SynsetNode* find(const std::string& id) const;
  friend bool operator==(const VideoKnowledgeGraph&, const VideoKnowledgeGraph&) = default;
};

/// One candidate word of a frame.
struct FrameWord {
  std::string lemma;
  PosChar pos = 'n';
  std::vector<std::string> candidates;  // sense order
  std::set<std::string> kinds;
  std::set<Box> boxes;
  friend bool operator==(const FrameWord&, const FrameWord&) = default;
};

using WordMap = std::map<std::string, FrameWord>;

/// Content tokens of free text: word_tokens minus stopwords and numerals.
std::vector<std::string> content_words(std::string_view text);

/// Words of a keyframe from tags, detections, captions, triplets, OCR and the
/// window transcript. Tokens are nouns unless they filled a triplet's verb
/// slot; words with no synsets are dropped.
WordMap extract_words(const FrameRecord& frame, const WindowRecord& window, const LexiconDb& lexicon);

/// Context for WSD: the whole video's transcript plus the window's captions and tags.
WordBag video_context(const VideoKnowledgeBase& kb);
WordBag window_context(const WindowRecord& window);
WordBag join_bags(const WordBag& a, const WordBag& b);

/// word -> synset id by simplified Lesk.
std::map<std::string, std::string> disambiguate_frame(const WordMap& words, const WordBag& context,
                                                      const LexiconDb& lexicon);

/// Direct nodes for one frame; words sharing a sense share the node.
std::vector<SynsetNode> construct_synset_nodes(const WordMap& words, const std::map<std::string, std::string>& senses,
                                               FrameKey frame, double timestamp);

/// Links every same-pos pair through its lowest common hypernym along the full
/// hypernym paths, then propagates evidence upward.
VideoKnowledgeGraph construct_graph(const std::vector<SynsetNode>& nodes, const LexiconDb& lexicon,
                                    const std::string& video_id = {});

/// Ancestors absorb the evidence of every descendant reachable by edges.
void propagate_evidence(VideoKnowledgeGraph& graph);

/// Set union of nodes (evidence union, direct OR), edges and windows; then
/// re-propagates. Differing video ids need `merged_id`.
VideoKnowledgeGraph merge_graphs(const std::vector<VideoKnowledgeGraph>& graphs,
                                 const std::optional<std::string>& merged_id = std::nullopt);

/// Graph of a whole KB: per-frame graphs merged across windows.
VideoKnowledgeGraph video_to_kg(const VideoKnowledgeBase& kb, const LexiconDb& lexicon);

/// Adds (or extends) the virtual node `virtual_id` under its parent with the
/// given evidence. The parent node is created when absent.
VideoKnowledgeGraph attach_virtual(const VideoKnowledgeGraph& graph, const std::string& virtual_id,
                                   const Evidence& evidence, const LexiconDb& lexicon);

nlohmann::ordered_json graph_to_json(const VideoKnowledgeGraph& graph);
/// Throws graph-parse-error.
VideoKnowledgeGraph graph_from_json(const nlohmann::json& doc);
std::string serialize_graph(const VideoKnowledgeGraph& graph);
VideoKnowledgeGraph parse_graph(const std::string& text);

}  // namespace vkg
