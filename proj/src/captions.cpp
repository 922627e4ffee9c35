#include "vkg/captions.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "vkg/error.hpp"
#include "vkg/slots.hpp"
#include "vkg/text.hpp"

namespace vkg {

namespace {

const std::unordered_set<std::string> kDeterminers{
    "a",    "an",   "the",   "this",    "these", "those", "his",   "its",   "their", "my",      "your", "our",
    "some", "any",  "each",  "every",   "another", "one", "two",   "three", "four",  "five",    "six",  "seven",
    "eight", "nine", "ten",  "several", "many",  "few",   "both",  "all",   "no",    "her",     "that"};

const std::unordered_set<std::string> kPrepositions{
    "in",      "on",      "at",      "with",    "near",    "under",   "over",    "behind",  "beside",
    "beneath", "above",   "below",   "inside",  "outside", "into",    "onto",    "through", "across",
    "along",   "around",  "against", "toward",  "towards", "between", "among",   "from",    "by",
    "of",      "for",     "about",   "up",      "down",    "off",     "out",     "away",    "underneath", "atop",
    "next to", "in front of", "on top of", "out of", "close to"};

const std::unordered_set<std::string> kAuxiliaries{"is",   "are", "was", "were", "be",   "been", "being",
                                                   "am",   "do",  "does", "did", "can",  "will", "could",
                                                   "would", "may", "might", "should", "must", "not", "also",
                                                   "very", "just", "still"};

const std::unordered_set<std::string> kPronouns{"he",     "she",     "it",      "they",   "him",      "her",
                                                "them",   "we",      "us",      "i",      "me",       "you",
                                                "himself", "herself", "itself", "themselves", "someone", "something",
                                                "everyone", "this",   "that",    "these",  "those"};

const std::unordered_set<std::string> kBoundaries{",", ";", "and", "or", "but", "then"};
const std::unordered_set<std::string> kRelatives{"who", "which", "whose", "while", "where"};
const std::unordered_set<std::string> kExpletives{"there", "here"};
const std::unordered_set<std::string> kLyNouns{"family", "belly", "jelly", "lily", "bully", "ally", "fly", "holy"};

const std::vector<std::vector<std::string>> kMultiwordPreps{
    {"in", "front", "of"}, {"on", "top", "of"}, {"next", "to"}, {"out", "of"}, {"close", "to"}};

std::vector<std::string> caption_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && (cur.back() == '\'' || cur.back() == '-')) cur.pop_back();
    if (cur.size() > 2 && cur.compare(cur.size() - 2, 2, "'s") == 0) cur.resize(cur.size() - 2);
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if ((ch == '\'' || ch == '-') && !cur.empty()) {
      cur.push_back(ch);
    } else {
      flush();
      if (ch == ',' || ch == ';') out.emplace_back(1, ch);
    }
  }
  flush();
  // Fold multiword prepositions into single tokens.
  std::vector<std::string> merged;
  for (std::size_t i = 0; i < out.size();) {
    bool folded = false;
    for (const auto& mw : kMultiwordPreps) {
      if (i + mw.size() <= out.size() && std::equal(mw.begin(), mw.end(), out.begin() + static_cast<long>(i))) {
        std::string joined;
        for (const auto& w : mw) joined += (joined.empty() ? "" : " ") + w;
        merged.push_back(joined);
        i += mw.size();
        folded = true;
        break;
      }
    }
    if (!folded) merged.push_back(out[i++]);
  }
  return merged;
}

enum class PosTag { det, prep, aux, pron, boundary, rel, skip, verb, content };

struct Item {
  enum Kind { np, verb, prep, boundary, rel } kind;
  std::string text;  // NP term, verb surface or preposition
};

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool is_pronoun(std::string_view word) { return kPronouns.count(std::string(word)) > 0; }

namespace {

TripletParser load_parser() {
  std::unordered_set<std::string> verbs;
  std::unordered_map<std::string, std::string> irregular;
  for (const auto& line : read_word_list(data_path("caption_verbs.txt"))) {
    const auto parts = split(line, ' ');
    if (parts.size() == 2) {
      irregular[parts[0]] = parts[1];
    } else {
      verbs.insert(line);
    }
  }
  auto adjectives = read_word_list(data_path("caption_adjectives.txt"));
  return TripletParser(std::move(verbs), {adjectives.begin(), adjectives.end()}, std::move(irregular));
}

}  // namespace

TripletParser::TripletParser() : TripletParser(load_parser()) {}

TripletParser::TripletParser(std::unordered_set<std::string> verbs, std::unordered_set<std::string> adjectives,
                             std::unordered_map<std::string, std::string> irregular)
    : verbs_(std::move(verbs)), adjectives_(std::move(adjectives)), irregular_(std::move(irregular)) {}

bool TripletParser::is_verb(const std::string& t) const {
  if (verbs_.count(t) || irregular_.count(t)) return true;
  std::vector<std::string> stems;
  auto undouble = [](std::string s) {
    if (s.size() >= 2 && s[s.size() - 1] == s[s.size() - 2]) s.pop_back();
    return s;
  };
  if (ends_with(t, "ing") && t.size() > 4) {
    const auto s = t.substr(0, t.size() - 3);
    stems = {s, s + "e", undouble(s)};
    if (ends_with(s, "y")) stems.push_back(s.substr(0, s.size() - 1) + "ie");  // lying -> lie
  } else if (ends_with(t, "ies") && t.size() > 4) {
    stems = {t.substr(0, t.size() - 3) + "y"};
  } else if (ends_with(t, "ied") && t.size() > 4) {
    stems = {t.substr(0, t.size() - 3) + "y"};
  } else if (ends_with(t, "es") && t.size() > 3) {
    stems = {t.substr(0, t.size() - 2), t.substr(0, t.size() - 1)};
  } else if (ends_with(t, "ed") && t.size() > 3) {
    const auto s = t.substr(0, t.size() - 2);
    stems = {s, s + "e", undouble(s)};
  } else if (ends_with(t, "s") && !ends_with(t, "ss") && t.size() > 2) {
    stems = {t.substr(0, t.size() - 1)};
  }
  return std::any_of(stems.begin(), stems.end(), [&](const auto& s) { return verbs_.count(s) > 0; });
}

std::vector<Triplet> TripletParser::parse(std::string_view sentence) const {
  const auto tokens = caption_tokens(sentence);

  // Tagging.
  std::vector<PosTag> tags(tokens.size(), PosTag::content);
  auto closed = [&](const std::string& t) {
    return kDeterminers.count(t) || kPrepositions.count(t) || kAuxiliaries.count(t) || kPronouns.count(t) ||
           kBoundaries.count(t) || kRelatives.count(t) || kExpletives.count(t);
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const bool next_content = i + 1 < tokens.size() && !closed(tokens[i + 1]);
    const PosTag prev = i > 0 ? tags[i - 1] : PosTag::boundary;
    if ((t == "her" || t == "that" || t == "this" || t == "these" || t == "those") && !next_content) {
      tags[i] = t == "that" && i > 0 && prev == PosTag::content ? PosTag::rel : PosTag::pron;
    } else if (kDeterminers.count(t)) {
      tags[i] = PosTag::det;
    } else if (kPrepositions.count(t)) {
      tags[i] = PosTag::prep;
    } else if (kPronouns.count(t)) {
      tags[i] = PosTag::pron;
    } else if (kBoundaries.count(t)) {
      tags[i] = PosTag::boundary;
    } else if (kRelatives.count(t)) {
      tags[i] = PosTag::rel;
    } else if (kAuxiliaries.count(t) || kExpletives.count(t)) {
      tags[i] = PosTag::aux;
    } else if (ends_with(t, "ly") && t.size() > 4 && !kLyNouns.count(t)) {
      tags[i] = PosTag::skip;
    } else if (is_verb(t) && prev != PosTag::det) {
      // An uninflected form right after a singular noun reads as a compound ("dog park").
      const bool base = verbs_.count(t) > 0;
      const bool after_noun = prev == PosTag::content;
      const bool plural_noun = after_noun && ends_with(tokens[i - 1], "s");
      tags[i] = (base && after_noun && !plural_noun) ? PosTag::content : PosTag::verb;
    }
  }

  // Chunking.
  std::vector<Item> items;
  for (std::size_t i = 0; i < tokens.size();) {
    switch (tags[i]) {
      case PosTag::det:
      case PosTag::content: {
        std::vector<std::string> words;
        while (i < tokens.size() && (tags[i] == PosTag::det || tags[i] == PosTag::content)) {
          if (tags[i] == PosTag::content) words.push_back(tokens[i]);
          ++i;
        }
        if (words.empty()) break;
        std::size_t first = 0;
        while (first + 1 < words.size() && adjectives_.count(words[first])) ++first;
        std::string term;
        for (std::size_t w = first; w < words.size(); ++w) term += (term.empty() ? "" : " ") + words[w];
        items.push_back({Item::np, term});
        break;
      }
      case PosTag::pron:
        items.push_back({Item::np, tokens[i++]});
        break;
      case PosTag::verb:
        items.push_back({Item::verb, tokens[i++]});
        break;
      case PosTag::prep:
        items.push_back({Item::prep, tokens[i++]});
        break;
      case PosTag::boundary:
        items.push_back({Item::boundary, tokens[i++]});
        break;
      case PosTag::rel:
        items.push_back({Item::rel, tokens[i++]});
        break;
      case PosTag::aux:
      case PosTag::skip:
        ++i;
        break;
    }
  }

  // Does the NP at `j` start a new clause (reaches a verb past any PP chain)?
  auto starts_clause = [&](std::size_t j) {
    if (j >= items.size() || items[j].kind != Item::np) return false;
    ++j;
    while (j + 1 < items.size() && items[j].kind == Item::prep && items[j + 1].kind == Item::np) j += 2;
    return j < items.size() && items[j].kind == Item::verb;
  };

  std::vector<Triplet> out;
  auto emit = [&](const std::string& s, const std::string& r, const std::string& o) {
    if (s.empty() || o.empty() || r.empty()) return;
    Triplet t;
    t.subject = s;
    t.relation = r;
    t.object = o;
    out.push_back(std::move(t));
  };

  enum class Link { none, verb_object, pp_object };
  std::string subj, verb, last_np, prep, attach_from, coord_from, coord_rel;
  bool verb_has_obj = false;
  bool after_boundary = false;
  bool new_subject = false;
  bool orphan_pp = false;
  Link last_link = Link::none;

  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    switch (it.kind) {
      case Item::np:
        if (!prep.empty()) {
          emit(attach_from, prep, it.text);
          coord_from = attach_from;
          coord_rel = prep;
          last_link = Link::pp_object;
          prep.clear();
        } else if (orphan_pp) {
          orphan_pp = false;  // object of a sentence-initial PP
        } else if (after_boundary && !new_subject && last_link == Link::verb_object) {
          emit(coord_from, coord_rel, it.text);
        } else if (!verb.empty() && !verb_has_obj && !new_subject) {
          emit(subj, verb, it.text);
          verb_has_obj = true;
          coord_from = subj;
          coord_rel = verb;
          last_link = Link::verb_object;
        } else {
          subj = it.text;
          verb.clear();
          verb_has_obj = false;
          last_link = Link::none;
        }
        last_np = it.text;
        after_boundary = false;
        new_subject = false;
        break;
      case Item::verb:
        if (subj.empty()) subj = last_np;
        verb = it.text;
        verb_has_obj = false;
        prep.clear();
        after_boundary = false;
        break;
      case Item::prep:
        if (!verb.empty() && !verb_has_obj) {
          verb += " " + it.text;
        } else if (!last_np.empty()) {
          prep = it.text;
          attach_from = last_np;
        } else {
          orphan_pp = true;
        }
        after_boundary = false;
        break;
      case Item::boundary:
        prep.clear();
        after_boundary = true;
        new_subject = starts_clause(i + 1);
        if (orphan_pp) orphan_pp = false;
        break;
      case Item::rel:
        subj = last_np;
        verb.clear();
        prep.clear();
        break;
    }
  }
  return out;
}

const TripletParser& default_triplet_parser() {
  static const TripletParser parser;
  return parser;
}

std::vector<Triplet> parse_triplets(std::string_view sentence) { return default_triplet_parser().parse(sentence); }

CorefMap default_coref_map(const std::vector<Triplet>& triplets) {
  CorefMap map;
  std::vector<std::string> subjects;  // non-pronoun subjects of verb triplets, in order
  auto latest_except = [&](const std::string& excluded) -> std::string {
    for (auto it = subjects.rbegin(); it != subjects.rend(); ++it) {
      if (*it != excluded) return *it;
    }
    return {};
  };
  std::unordered_set<std::string> seen;  // a pronoun is bound at its first mention or never
  for (const auto& t : triplets) {
    if (is_pronoun(t.subject) && seen.insert(t.subject).second) {
      if (auto a = latest_except({}); !a.empty()) map[t.subject] = a;
    }
    const auto subject = map.count(t.subject) ? map.at(t.subject) : t.subject;
    // An object pronoun never refers back to its own clause's subject.
    if (is_pronoun(t.object) && seen.insert(t.object).second) {
      if (auto a = latest_except(subject); !a.empty()) map[t.object] = a;
    }
    // Prepositional attachments describe a noun phrase; they do not introduce a new subject.
    if (!is_pronoun(t.subject) && !kPrepositions.count(t.relation)) subjects.push_back(t.subject);
  }
  return map;
}

std::vector<Triplet> resolve_coreferences(const std::vector<Triplet>& triplets, const CorefMap& map) {
  auto canonical = [&](std::string m) {
    for (std::size_t hops = 0; hops <= map.size(); ++hops) {
      auto it = map.find(m);
      if (it == map.end() || it->second == m) break;
      m = it->second;
    }
    return m;
  };
  std::vector<Triplet> out;
  for (auto t : triplets) {
    t.subject = canonical(t.subject);
    t.object = canonical(t.object);
    if (is_pronoun(t.subject) || is_pronoun(t.object)) continue;
    out.push_back(std::move(t));
  }
  return out;
}

ConcretenessLexicon::ConcretenessLexicon(std::unordered_map<std::string, double> ratings)
    : ratings_(std::move(ratings)) {
  for (const auto& [w, r] : ratings_) {
    if (!(r >= 1.0 && r <= 5.0)) throw Error("invalid-lexicon", "rating out of [1,5]", w);
  }
}

ConcretenessLexicon ConcretenessLexicon::load(const std::filesystem::path& path) {
  std::unordered_map<std::string, double> ratings;
  std::size_t line_no = 0;
  for (const auto& line : read_word_list(path)) {
    ++line_no;
    const auto parts = split(line, '|');
    if (parts.size() != 2) throw Error("invalid-lexicon", "expected word|rating", line);
    const auto word = to_lower(trim(parts[0]));
    double rating = 0;
    try {
      std::size_t used = 0;
      rating = std::stod(trim(parts[1]), &used);
      if (used != trim(parts[1]).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error("invalid-lexicon", "rating is not a number", line);
    }
    if (word.empty()) throw Error("invalid-lexicon", "empty word", line);
    ratings[word] = rating;
  }
  return ConcretenessLexicon(std::move(ratings));
}

const ConcretenessLexicon& ConcretenessLexicon::shipped() {
  static const auto lexicon = load(data_path("concreteness.txt"));
  return lexicon;
}

namespace {

std::vector<std::string> singular_forms(const std::string& w) {
  std::vector<std::string> out;
  if (ends_with(w, "ies") && w.size() > 4) out.push_back(w.substr(0, w.size() - 3) + "y");
  if (ends_with(w, "es") && w.size() > 3) out.push_back(w.substr(0, w.size() - 2));
  if (ends_with(w, "s") && !ends_with(w, "ss") && w.size() > 2) out.push_back(w.substr(0, w.size() - 1));
  return out;
}

}  // namespace

std::optional<double> ConcretenessLexicon::rating(const std::string& term) const {
  const auto key = to_lower(trim(term));
  auto lookup = [&](const std::string& k) -> std::optional<double> {
    if (auto it = ratings_.find(k); it != ratings_.end()) return it->second;
    for (const auto& s : singular_forms(k)) {
      if (auto it = ratings_.find(s); it != ratings_.end()) return it->second;
    }
    return std::nullopt;
  };
  if (auto r = lookup(key)) return r;
  if (const auto space = key.find_last_of(' '); space != std::string::npos) return lookup(key.substr(space + 1));
  return std::nullopt;
}

std::optional<double> mean_concreteness(const Triplet& t, const ConcretenessLexicon& lexicon) {
  const auto s = lexicon.rating(t.subject);
  const auto o = lexicon.rating(t.object);
  if (!s || !o) return std::nullopt;
  return (*s + *o) / 2.0;
}

std::vector<Triplet> filter_triplets(const std::vector<Triplet>& triplets, const ConcretenessLexicon& lexicon,
                                     double tau) {
  std::vector<Triplet> out;
  for (const auto& t : triplets) {
    const auto m = mean_concreteness(t, lexicon);
    if (m && *m >= tau) out.push_back(t);
  }
  return out;
}

std::string frame_key(const FrameRef& ref) {
  return ref.video_id + "/w" + std::to_string(ref.window_index) + "/f" + std::to_string(ref.frame_index);
}

namespace {

std::vector<std::string> caption_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      if (auto t = trim(cur); t.size() > 1) out.push_back(t);
      cur.clear();
    }
  }
  if (auto t = trim(cur); !t.empty()) out.push_back(t);
  return out;
}

}  // namespace

std::vector<FrameParagraph> merge_captions(const Captions& captions) {
  std::vector<std::size_t> order(captions.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = captions.items[a];
    const auto& cb = captions.items[b];
    if (ca.frame.frame_index != cb.frame.frame_index) return ca.frame.frame_index < cb.frame.frame_index;
    return ca.branch_index < cb.branch_index;
  });
  std::vector<FrameParagraph> out;
  for (auto idx : order) {
    const auto& c = captions.items[idx];
    if (out.empty() || !same_frame(out.back().frame, c.frame)) out.push_back(FrameParagraph{c.frame, {}, {}});
    for (auto& s : caption_sentences(c.text)) {
      out.back().sentences.push_back(std::move(s));
      out.back().caption_index.push_back(idx);
    }
  }
  return out;
}

TripletList extract_relations(const Captions& captions, const ConcretenessLexicon& lexicon,
                              const RelationConfig& config, const TripletList* adapter,
                              const std::map<std::string, CorefMap>* coref_by_frame) {
  TripletList out;
  for (const auto& para : merge_captions(captions)) {
    std::vector<Triplet> raw;
    if (adapter != nullptr) {
      for (const auto& t : adapter->items) {
        if (same_frame(t.frame, para.frame)) raw.push_back(t);
      }
    } else {
      for (std::size_t s = 0; s < para.sentences.size(); ++s) {
        for (auto t : parse_triplets(para.sentences[s])) {
          t.frame = para.frame;
          t.caption_index = para.caption_index[s];
          raw.push_back(std::move(t));
        }
      }
    }
    CorefMap map;
    if (coref_by_frame != nullptr) {
      if (auto it = coref_by_frame->find(frame_key(para.frame)); it != coref_by_frame->end()) map = it->second;
    } else {
      map = default_coref_map(raw);
    }
    for (auto& t : filter_triplets(resolve_coreferences(raw, map), lexicon, config.tau)) {
      out.items.push_back(std::move(t));
    }
  }
  return out;
}

Pipe relation_pipe(const ConcretenessLexicon& lexicon, RelationConfig config) {
  Pipe p;
  p.name = "relations";
  p.reads = {slots::captions, slots::parsed_triplets, slots::coref};
  p.writes = {slots::triplets};
  p.transform = [&lexicon, config](DataWindow w) {
    const auto* caps = w.payload<Captions>(slots::captions);
    const Captions empty;
    std::map<std::string, CorefMap> coref;
    const auto* coref_slot = w.payload<GenericPayload>(slots::coref);
    if (coref_slot != nullptr) {
      for (const auto& [key, mapping] : coref_slot->value.items()) {
        for (const auto& [mention, canonical] : mapping.items()) coref[key][mention] = canonical.get<std::string>();
      }
    }
    auto triplets = extract_relations(caps ? *caps : empty, lexicon, config,
                                      w.payload<TripletList>(slots::parsed_triplets),
                                      coref_slot ? &coref : nullptr);
    return std::move(w).with_slot(make_slot(slots::triplets, std::move(triplets), "relations"));
  };
  return p;
}

}  // namespace vkg
