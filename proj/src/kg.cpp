#include "vkg/kg.hpp"

#include <algorithm>
#include <cctype>
#include <deque>

#include "vkg/error.hpp"
#include "vkg/text.hpp"

namespace vkg {

using ojson = nlohmann::ordered_json;

void absorb(Evidence& into, const Evidence& from) {
  for (const auto& [key, info] : from) {
    auto [it, inserted] = into.try_emplace(key, info);
    if (inserted) continue;
    it->second.kinds.insert(info.kinds.begin(), info.kinds.end());
    it->second.words.insert(info.words.begin(), info.words.end());
    it->second.boxes.insert(info.boxes.begin(), info.boxes.end());
  }
}

bool evidence_contains(const Evidence& super, const Evidence& sub) {
  for (const auto& [key, info] : sub) {
    auto it = super.find(key);
    if (it == super.end()) return false;
    const auto& s = it->second;
    if (!std::includes(s.kinds.begin(), s.kinds.end(), info.kinds.begin(), info.kinds.end()) ||
        !std::includes(s.words.begin(), s.words.end(), info.words.begin(), info.words.end()) ||
        !std::includes(s.boxes.begin(), s.boxes.end(), info.boxes.begin(), info.boxes.end())) {
      return false;
    }
  }
  return true;
}

const SynsetNode* VideoKnowledgeGraph::find(const std::string& id) const {
  auto it = nodes.find(id);
  return it == nodes.end() ? nullptr : &it->second;
}

std::vector<std::string> content_words(std::string_view text) {
  const auto& stop = default_stopwords();
  std::vector<std::string> out;
  for (auto& w : word_tokens(text)) {
    if (w.size() < 2 || stop.count(w)) continue;
    if (std::any_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) continue;
    out.push_back(std::move(w));
  }
  return out;
}

namespace {

std::string normalize_term(std::string_view term) {
  std::string out;
  for (const auto& w : word_tokens(term)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::optional<std::pair<std::string, PosChar>> lemma_for(const std::string& term, PosChar pos, const LexiconDb& lex) {
  if (auto l = lex.morphy(term, pos)) return std::make_pair(*l, pos);
  if (pos == 'v') {
    if (auto l = lex.morphy(term, 'n')) return std::make_pair(*l, 'n');
  }
  const auto space = term.rfind(' ');
  if (space != std::string::npos) {
    if (auto l = lex.morphy(term.substr(space + 1), 'n')) return std::make_pair(*l, 'n');
  }
  return std::nullopt;
}

}  // namespace

WordMap extract_words(const FrameRecord& frame, const WindowRecord& window, const LexiconDb& lexicon) {
  const auto& stop = default_stopwords();
  std::set<std::string> verb_slot;
  for (const auto& t : frame.triplets) {
    for (const auto& w : word_tokens(t.relation)) {
      if (!stop.count(w)) {
        verb_slot.insert(w);
        break;
      }
    }
  }

  WordMap words;
  auto add = [&](std::string_view raw, const char* kind, const std::optional<Box>& box = std::nullopt) {
    const std::string term = normalize_term(raw);
    if (term.empty()) return;
    auto it = words.find(term);
    if (it == words.end()) {
      const auto lemma = lemma_for(term, verb_slot.count(term) ? 'v' : 'n', lexicon);
      if (!lemma) return;
      FrameWord fw;
      fw.lemma = lemma->first;
      fw.pos = lemma->second;
      for (const auto* s : lexicon.synsets_of(fw.lemma, fw.pos)) fw.candidates.push_back(s->id);
      if (fw.candidates.empty()) return;
      it = words.emplace(term, std::move(fw)).first;
    }
    it->second.kinds.insert(kind);
    if (box) it->second.boxes.insert(*box);
  };

  for (const auto& t : frame.tags) add(t.label, "tag");
  for (const auto& d : frame.detections) add(d.label, "detection", d.box);
  for (const auto& t : frame.triplets) {
    add(t.subject, "triplet");
    add(t.object, "triplet");
    for (const auto& w : word_tokens(t.relation)) {
      if (verb_slot.count(w)) {
        add(w, "triplet");
        break;
      }
    }
  }
  for (const auto& c : frame.captions) {
    for (const auto& w : content_words(c.text)) add(w, "caption");
  }
  for (const auto& o : frame.ocr) {
    for (const auto& w : content_words(o.text)) add(w, "ocr");
  }
  for (const auto& w : content_words(window.transcript.text)) add(w, "transcript");
  return words;
}

WordBag video_context(const VideoKnowledgeBase& kb) {
  WordBag bag;
  for (const auto& w : kb.windows) {
    for (const auto& word : content_words(w.transcript.text)) ++bag[word];
  }
  return bag;
}

WordBag window_context(const WindowRecord& window) {
  WordBag bag;
  for (const auto& f : window.keyframes) {
    for (const auto& c : f.captions) {
      for (const auto& word : content_words(c.text)) ++bag[word];
    }
    for (const auto& t : f.tags) {
      for (const auto& word : content_words(t.label)) ++bag[word];
    }
  }
  return bag;
}

WordBag join_bags(const WordBag& a, const WordBag& b) {
  WordBag out = a;
  for (const auto& [w, n] : b) out[w] += n;
  return out;
}

std::map<std::string, std::string> disambiguate_frame(const WordMap& words, const WordBag& context,
                                                      const LexiconDb& lexicon) {
  std::map<std::string, std::string> out;
  for (const auto& [word, fw] : words) {
    out[word] = fw.candidates.size() == 1 ? fw.candidates.front()
                                          : lexicon.lesk_disambiguate(fw.lemma, fw.pos, context);
  }
  return out;
}

std::vector<SynsetNode> construct_synset_nodes(const WordMap& words, const std::map<std::string, std::string>& senses,
                                               FrameKey frame, double timestamp) {
  std::map<std::string, SynsetNode> by_id;
  for (const auto& [word, sense] : senses) {
    auto w = words.find(word);
    if (w == words.end()) continue;
    auto& node = by_id[sense];
    node.synset_id = sense;
    node.direct = true;
    EvidenceInfo info;
    info.timestamp = timestamp;
    info.kinds = w->second.kinds;
    info.words = {word};
    info.boxes = w->second.boxes;
    absorb(node.evidence, Evidence{{frame, info}});
  }
  std::vector<SynsetNode> out;
  for (auto& [id, node] : by_id) out.push_back(std::move(node));
  return out;
}

void propagate_evidence(VideoKnowledgeGraph& graph) {
  std::map<std::string, std::vector<std::string>> parents;
  for (const auto& [child, parent] : graph.edges) parents[child].push_back(parent);
  for (const auto& [id, node] : graph.nodes) {
    if (node.evidence.empty()) continue;
    const Evidence own = node.evidence;
    std::set<std::string> seen{id};
    std::deque<std::string> todo{id};
    while (!todo.empty()) {
      const auto cur = todo.front();
      todo.pop_front();
      auto it = parents.find(cur);
      if (it == parents.end()) continue;
      for (const auto& p : it->second) {
        if (!seen.insert(p).second) continue;
        absorb(graph.nodes.at(p).evidence, own);
        todo.push_back(p);
      }
    }
  }
}

namespace {

SynsetNode& ensure_node(VideoKnowledgeGraph& g, const std::string& id) {
  auto& n = g.nodes[id];
  n.synset_id = id;
  return n;
}

void refresh_windows(VideoKnowledgeGraph& g) {
  for (const auto& [id, n] : g.nodes) {
    for (const auto& [key, info] : n.evidence) g.windows.insert(key.window);
  }
}

}  // namespace

VideoKnowledgeGraph construct_graph(const std::vector<SynsetNode>& nodes, const LexiconDb& lexicon,
                                    const std::string& video_id) {
  VideoKnowledgeGraph g;
  g.video_id = video_id;
  g.lexicon_fingerprint = lexicon.fingerprint();
  for (const auto& n : nodes) {
    auto& slot = ensure_node(g, n.synset_id);
    slot.direct = slot.direct || n.direct;
    absorb(slot.evidence, n.evidence);
  }
  std::vector<std::string> ids;
  for (const auto& [id, n] : g.nodes) ids.push_back(id);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      if (pos_of_id(ids[i]) != pos_of_id(ids[j])) continue;
      const std::string h = lexicon.lowest_common_hypernym(ids[i], ids[j]).id;
      ensure_node(g, h);
      for (const auto& from : {ids[i], ids[j]}) {
        for (const auto& e : lexicon.edges_between(from, h)) {
          ensure_node(g, e.first);
          ensure_node(g, e.second);
          g.edges.insert(e);
        }
      }
    }
  }
  propagate_evidence(g);
  refresh_windows(g);
  return g;
}

VideoKnowledgeGraph merge_graphs(const std::vector<VideoKnowledgeGraph>& graphs,
                                 const std::optional<std::string>& merged_id) {
  VideoKnowledgeGraph out;
  if (graphs.empty()) {
    out.video_id = merged_id.value_or("");
    return out;
  }
  out.video_id = graphs.front().video_id;
  for (const auto& g : graphs) {
    if (g.video_id != out.video_id && !merged_id) {
      throw Error("video-mismatch", "merging graphs of " + out.video_id + " and " + g.video_id);
    }
    if (!g.lexicon_fingerprint.empty()) {
      if (!out.lexicon_fingerprint.empty() && out.lexicon_fingerprint != g.lexicon_fingerprint) {
        throw Error("fingerprint-mismatch", "graphs were built from different lexicons");
      }
      out.lexicon_fingerprint = g.lexicon_fingerprint;
    }
    for (const auto& [id, n] : g.nodes) {
      auto& slot = ensure_node(out, id);
      slot.direct = slot.direct || n.direct;
      absorb(slot.evidence, n.evidence);
    }
    out.edges.insert(g.edges.begin(), g.edges.end());
    out.windows.insert(g.windows.begin(), g.windows.end());
  }
  if (merged_id) out.video_id = *merged_id;
  propagate_evidence(out);
  return out;
}

VideoKnowledgeGraph video_to_kg(const VideoKnowledgeBase& kb, const LexiconDb& lexicon) {
  const WordBag video_ctx = video_context(kb);
  std::vector<VideoKnowledgeGraph> window_graphs;
  for (const auto& window : kb.windows) {
    const WordBag ctx = join_bags(video_ctx, window_context(window));
    std::vector<VideoKnowledgeGraph> frame_graphs;
    for (const auto& frame : window.keyframes) {
      const auto words = extract_words(frame, window, lexicon);
      const auto senses = disambiguate_frame(words, ctx, lexicon);
      const auto nodes = construct_synset_nodes(words, senses, FrameKey{window.index, frame.frame.frame_index},
                                                frame.frame.timestamp);
      frame_graphs.push_back(construct_graph(nodes, lexicon, kb.video_id));
    }
    window_graphs.push_back(merge_graphs(frame_graphs, kb.video_id));
  }
  auto graph = merge_graphs(window_graphs, kb.video_id);
  graph.lexicon_fingerprint = lexicon.fingerprint();
  return graph;
}

VideoKnowledgeGraph attach_virtual(const VideoKnowledgeGraph& graph, const std::string& virtual_id,
                                   const Evidence& evidence, const LexiconDb& lexicon) {
  const Synset& v = lexicon.at(virtual_id);
  if (!v.is_virtual) throw Error("not-virtual", virtual_id + " is not a virtual synset", virtual_id);
  VideoKnowledgeGraph g = graph;
  const std::string parent = v.hypernyms.front();
  ensure_node(g, parent);
  auto& node = ensure_node(g, virtual_id);
  node.direct = true;
  absorb(node.evidence, evidence);
  g.edges.emplace(virtual_id, parent);
  propagate_evidence(g);
  refresh_windows(g);
  return g;
}

// ---- persistence ------------------------------------------------------------

ojson graph_to_json(const VideoKnowledgeGraph& graph) {
  ojson doc;
  doc["video_id"] = graph.video_id;
  doc["lexicon_fingerprint"] = graph.lexicon_fingerprint;
  doc["windows"] = graph.windows;
  ojson nodes = ojson::array();
  for (const auto& [id, n] : graph.nodes) {
    ojson ev = ojson::array();
    for (const auto& [key, info] : n.evidence) {
      ojson boxes = ojson::array();
      for (const auto& b : info.boxes) boxes.push_back(ojson::array({b.x0, b.y0, b.x1, b.y1}));
      ev.push_back(ojson{{"window", key.window},
                         {"frame", key.frame},
                         {"t", info.timestamp},
                         {"kinds", info.kinds},
                         {"words", info.words},
                         {"boxes", std::move(boxes)}});
    }
    nodes.push_back(ojson{{"id", id}, {"direct", n.direct}, {"evidence", std::move(ev)}});
  }
  doc["nodes"] = std::move(nodes);
  ojson edges = ojson::array();
  for (const auto& [c, p] : graph.edges) edges.push_back(ojson{{"child", c}, {"parent", p}});
  doc["edges"] = std::move(edges);
  return doc;
}

VideoKnowledgeGraph graph_from_json(const nlohmann::json& doc) {
  VideoKnowledgeGraph g;
  try {
    g.video_id = doc.at("video_id").get<std::string>();
    g.lexicon_fingerprint = doc.at("lexicon_fingerprint").get<std::string>();
    for (const auto& w : doc.at("windows")) g.windows.insert(w.get<std::uint32_t>());
    for (const auto& jn : doc.at("nodes")) {
      SynsetNode n;
      n.synset_id = jn.at("id").get<std::string>();
      n.direct = jn.at("direct").get<bool>();
      for (const auto& je : jn.at("evidence")) {
        EvidenceInfo info;
        info.timestamp = je.at("t").get<double>();
        for (const auto& k : je.at("kinds")) info.kinds.insert(k.get<std::string>());
        for (const auto& w : je.at("words")) info.words.insert(w.get<std::string>());
        for (const auto& b : je.at("boxes")) {
          info.boxes.insert(Box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()});
        }
        n.evidence.emplace(FrameKey{je.at("window").get<std::uint32_t>(), je.at("frame").get<std::uint64_t>()},
                           std::move(info));
      }
      const auto id = n.synset_id;
      g.nodes.emplace(id, std::move(n));
    }
    for (const auto& je : doc.at("edges")) {
      Edge e{je.at("child").get<std::string>(), je.at("parent").get<std::string>()};
      if (!g.nodes.count(e.first) || !g.nodes.count(e.second)) {
        throw Error("graph-parse-error", "edge " + e.first + " -> " + e.second + " names a missing node");
      }
      g.edges.insert(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("graph-parse-error", std::string("malformed graph document: ") + e.what());
  }
  return g;
}

std::string serialize_graph(const VideoKnowledgeGraph& graph) { return graph_to_json(graph).dump(2) + "\n"; }

VideoKnowledgeGraph parse_graph(const std::string& text) {
  try {
    return graph_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("graph-parse-error", std::string("graph is not valid JSON: ") + e.what());
  }
}

}  // namespace vkg
