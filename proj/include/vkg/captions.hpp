#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vkg/pipeline.hpp"
#include "vkg/window.hpp"

namespace vkg {

/// Rule-based NP VERB (PREP)? NP extractor over closed-class word lists.
class TripletParser {
 public:
  /// Loads caption_verbs.txt and caption_adjectives.txt from the data dir.
  TripletParser();
  /// `verbs` holds base forms; `irregular` maps irregular forms to their base.
  TripletParser(std::unordered_set<std::string> verbs, std::unordered_set<std::string> adjectives,
                std::unordered_map<std::string, std::string> irregular = {});

  /// One caption sentence; subject/object are normalized terms (modifiers
  /// stripped, lowercase). FrameRef and caption index are left default.
  std::vector<Triplet> parse(std::string_view sentence) const;

  bool is_verb(const std::string& token) const;

 private:
  std::unordered_set<std::string> verbs_;
  std::unordered_set<std::string> adjectives_;
  std::unordered_map<std::string, std::string> irregular_;
};

const TripletParser& default_triplet_parser();
std::vector<Triplet> parse_triplets(std::string_view sentence);

bool is_pronoun(std::string_view word);

/// mention -> canonical mention, scoped to one frame's caption paragraph.
using CorefMap = std::map<std::string, std::string>;

/// Default resolver: each pronoun maps to the most recent preceding
/// non-pronoun subject of a verb triplet (first binding wins). An object
/// pronoun skips its own clause's subject.
CorefMap default_coref_map(const std::vector<Triplet>& triplets);

/// Substitutes mapped mentions (transitively) and drops triplets that still
/// carry a pronoun.
std::vector<Triplet> resolve_coreferences(const std::vector<Triplet>& triplets, const CorefMap& map);

class ConcretenessLexicon {
 public:
  ConcretenessLexicon() = default;
  explicit ConcretenessLexicon(std::unordered_map<std::string, double> ratings);

  /// `word|rating` lines; '#' comments. Throws invalid-lexicon on bad rows or
  /// ratings outside [1,5].
  static ConcretenessLexicon load(const std::filesystem::path& path);
  static const ConcretenessLexicon& shipped();

  /// Exact term, else its last word (head noun); each tried with a naive singular too.
  std::optional<double> rating(const std::string& term) const;
  std::size_t size() const { return ratings_.size(); }

 private:
  std::unordered_map<std::string, double> ratings_;
};

std::optional<double> mean_concreteness(const Triplet& t, const ConcretenessLexicon& lexicon);

/// Keeps triplets whose mean concreteness is >= tau; missing means reject.
std::vector<Triplet> filter_triplets(const std::vector<Triplet>& triplets, const ConcretenessLexicon& lexicon,
                                     double tau);

/// Frame-level dense caption: the frame's captions in branch order joined as sentences.
struct FrameParagraph {
  FrameRef frame;
  std::vector<std::string> sentences;
  std::vector<std::size_t> caption_index;  // index into the window's Captions, per sentence
};

std::vector<FrameParagraph> merge_captions(const Captions& captions);

struct RelationConfig {
  double tau = 3.0;
};

/// parse -> coref -> filter for a whole window's captions. A non-null
/// `adapter` list replaces the rule-based parse.
TripletList extract_relations(const Captions& captions, const ConcretenessLexicon& lexicon,
                              const RelationConfig& config, const TripletList* adapter = nullptr,
                              const std::map<std::string, CorefMap>* coref_by_frame = nullptr);

std::string frame_key(const FrameRef& ref);

/// Reads "captions" plus optional "parsed_triplets" and "coref"; writes
/// "triplets". `lexicon` must outlive the pipe.
Pipe relation_pipe(const ConcretenessLexicon& lexicon, RelationConfig config = {});

}  // namespace vkg
