#include "vkg/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>

#include "vkg/captions.hpp"
#include "vkg/error.hpp"
#include "vkg/text.hpp"

namespace vkg {

std::vector<std::string> QueryGraph::direct() const {
  std::vector<std::string> out;
  for (const auto& [id, d] : nodes) {
    if (d) out.push_back(id);
  }
  return out;
}

namespace {

std::string join(const std::vector<std::string>& tokens, std::size_t from, std::size_t n, char sep) {
  std::string out;
  for (std::size_t i = from; i < from + n; ++i) {
    if (i > from) out += sep;
    out += tokens[i];
  }
  return out;
}

bool all_free(const std::vector<bool>& used, std::size_t from, std::size_t n) {
  return std::none_of(used.begin() + static_cast<std::ptrdiff_t>(from),
                      used.begin() + static_cast<std::ptrdiff_t>(from + n), [](bool b) { return b; });
}

void mark(std::vector<bool>& used, std::size_t from, std::size_t n) {
  std::fill(used.begin() + static_cast<std::ptrdiff_t>(from), used.begin() + static_cast<std::ptrdiff_t>(from + n), true);
}

}  // namespace

QueryGraph query_to_graph(const std::string& text, const LexiconDb& lexicon) {
  const auto tokens = word_tokens(text);
  std::vector<bool> used(tokens.size(), false);

  // virtual names, longest slug first
  std::vector<std::pair<std::vector<std::string>, VirtualSynset>> slugs;
  for (const auto& v : lexicon.virtual_synsets()) slugs.emplace_back(split(lemma_slug(v.name), '_'), v);
  std::stable_sort(slugs.begin(), slugs.end(), [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  std::vector<VirtualSynset> virtual_hits;
  for (const auto& [parts, v] : slugs) {
    if (parts.empty()) continue;
    for (std::size_t i = 0; i + parts.size() <= tokens.size(); ++i) {
      if (!all_free(used, i, parts.size())) continue;
      if (!std::equal(parts.begin(), parts.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) continue;
      mark(used, i, parts.size());
      virtual_hits.push_back(v);
      break;
    }
  }

  FrameRecord frame;
  for (std::size_t n : {3u, 2u}) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      if (!all_free(used, i, n)) continue;
      if (!lexicon.morphy(join(tokens, i, n, '_'), 'n')) continue;
      frame.tags.push_back(Tag{FrameRef{}, join(tokens, i, n, ' '), 1.0});
      mark(used, i, n);
    }
  }
  std::string residual;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!used[i]) residual += tokens[i] + " ";
  }
  frame.captions.push_back(Caption{FrameRef{}, residual, std::nullopt, 0});
  for (const auto& t : parse_triplets(text)) {
    Triplet verb;
    verb.relation = t.relation;
    frame.triplets.push_back(std::move(verb));
  }

  const auto words = extract_words(frame, WindowRecord{}, lexicon);
  if (words.empty() && virtual_hits.empty()) {
    throw Error("no-known-terms", "no query word is in the lexicon", text);
  }
  const auto senses = disambiguate_frame(words, make_bag(tokens), lexicon);
  auto nodes = construct_synset_nodes(words, senses, FrameKey{}, 0.0);
  for (const auto& v : virtual_hits) nodes.push_back(SynsetNode{v.parent, {}, false});
  auto g = construct_graph(nodes, lexicon);
  for (const auto& v : virtual_hits) {
    g.nodes[v.id] = SynsetNode{v.id, {}, true};
    g.edges.emplace(v.id, v.parent);
  }

  QueryGraph q;
  q.origin = text;
  q.lexicon_fingerprint = lexicon.fingerprint();
  for (const auto& [id, n] : g.nodes) q.nodes[id] = n.direct;
  q.edges = g.edges;
  return q;
}

QueryGraph query_from_graph(const VideoKnowledgeGraph& graph, std::string origin) {
  QueryGraph q;
  q.origin = std::move(origin);
  q.lexicon_fingerprint = graph.lexicon_fingerprint;
  for (const auto& [id, n] : graph.nodes) q.nodes[id] = n.direct;
  q.edges = graph.edges;
  if (q.direct().empty()) throw Error("no-known-terms", "media produced no graph nodes", q.origin);
  return q;
}

Overlap overlap_score(const QueryGraph& query, const VideoKnowledgeGraph& video, const LexiconDb& lexicon) {
  if (!query.lexicon_fingerprint.empty() && !video.lexicon_fingerprint.empty() &&
      query.lexicon_fingerprint != video.lexicon_fingerprint) {
    throw Error("fingerprint-mismatch", "query and graph use different lexicons", video.video_id);
  }
  Overlap out;
  const auto direct = query.direct();
  if (direct.empty()) return out;
  for (const auto& id : direct) {
    if (!video.nodes.count(id)) continue;
    out.matched.push_back(id);
    if (const auto* s = lexicon.find(id)) out.specificity += s->depth;
  }
  out.score = static_cast<double>(out.matched.size()) / static_cast<double>(direct.size());
  return out;
}

std::vector<RetrievalHit> retrieve(const QueryGraph& query, const StoreSnapshot& snapshot, const LexiconDb& lexicon,
                                   const RetrieveOptions& options, std::vector<std::string>* skipped) {
  std::vector<RetrievalHit> hits;
  for (const auto& [video_id, gv] : snapshot) {
    Overlap ov;
    try {
      ov = overlap_score(query, *gv.graph, lexicon);
    } catch (const Error& e) {
      if (e.code() != "fingerprint-mismatch") throw;
      if (skipped != nullptr) skipped->push_back(video_id);
      continue;
    }
    if (ov.matched.empty()) continue;
    RetrievalHit hit{video_id, gv.version, ov.score, ov.specificity, ov.matched, {}};
    std::map<FrameKey, std::pair<double, std::size_t>> votes;
    for (const auto& id : ov.matched) {
      for (const auto& [key, info] : gv.graph->nodes.at(id).evidence) {
        auto& v = votes[key];
        v.first = info.timestamp;
        ++v.second;
      }
    }
    for (const auto& [key, v] : votes) {
      hit.frames.push_back(RankedFrame{FrameRef{video_id, key.window, key.frame, v.first}, v.second});
    }
    std::sort(hit.frames.begin(), hit.frames.end(), [](const RankedFrame& a, const RankedFrame& b) {
      if (a.votes != b.votes) return a.votes > b.votes;
      if (a.frame.timestamp != b.frame.timestamp) return a.frame.timestamp < b.frame.timestamp;
      return std::tie(a.frame.window_index, a.frame.frame_index) < std::tie(b.frame.window_index, b.frame.frame_index);
    });
    if (options.max_frames > 0 && hit.frames.size() > options.max_frames) hit.frames.resize(options.max_frames);
    hits.push_back(std::move(hit));
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.specificity != b.specificity) return a.specificity > b.specificity;
    return a.video_id < b.video_id;
  });
  if (hits.size() > options.top_k) hits.resize(options.top_k);
  return hits;
}

std::vector<RetrievalHit> retrieve(const std::string& text, const GraphStore& store, const LexiconDb& lexicon,
                                   const RetrieveOptions& options) {
  const auto snap = store.snapshot();
  if (snap->empty()) return {};
  return retrieve(query_to_graph(text, lexicon), *snap, lexicon, options);
}

nlohmann::ordered_json hit_to_json(const RetrievalHit& hit) {
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const auto& f : hit.frames) {
    frames.push_back({{"video_id", f.frame.video_id},
                      {"window", f.frame.window_index},
                      {"frame", f.frame.frame_index},
                      {"t", f.frame.timestamp},
                      {"votes", f.votes}});
  }
  return {{"video_id", hit.video_id},     {"graph_version", hit.graph_version}, {"score", hit.score},
          {"specificity", hit.specificity}, {"matched", hit.matched},          {"frames", frames}};
}

// ---- store ---------------------------------------------------------------------

void check_video_id(const std::string& video_id) {
  static const std::regex ok("[A-Za-z0-9_][A-Za-z0-9._-]*");
  if (video_id.empty() || video_id.size() > 128 || !std::regex_match(video_id, ok)) {
    throw Error("invalid-video-id", "video ids must be [A-Za-z0-9._-] and not start with '.' or '-'", video_id);
  }
}

namespace {

std::string version_file(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%06llu.json", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

GraphStore::GraphStore(std::filesystem::path root) : root_(std::move(root)) {
  namespace fs = std::filesystem;
  fs::create_directories(*root_);
  static const std::regex name("v([0-9]+)\\.json");
  auto snap = std::make_shared<StoreSnapshot>();
  for (const auto& dir : fs::directory_iterator(*root_)) {
    if (!dir.is_directory()) continue;
    const auto video_id = dir.path().filename().string();
    for (const auto& file : fs::directory_iterator(dir.path())) {
      std::smatch m;
      const auto fname = file.path().filename().string();
      if (!std::regex_match(fname, m, name)) continue;
      VideoKnowledgeGraph g;
      try {
        g = parse_graph(read_file(file.path()));
      } catch (const Error& e) {
        throw Error("store-corrupt", e.what(), file.path().string());
      }
      if (g.video_id != video_id) throw Error("store-corrupt", "graph video id differs from its directory", file.path().string());
      all_[video_id][std::stoull(m[1].str())] = std::make_shared<const VideoKnowledgeGraph>(std::move(g));
    }
  }
  for (const auto& [vid, versions] : all_) {
    if (!versions.empty()) (*snap)[vid] = GraphVersion{versions.rbegin()->first, versions.rbegin()->second};
  }
  snapshot_ = std::move(snap);
}

std::uint64_t GraphStore::put(VideoKnowledgeGraph graph) {
  check_video_id(graph.video_id);
  std::lock_guard lock(write_mu_);
  auto& versions = all_[graph.video_id];
  if (!versions.empty() && *versions.rbegin()->second == graph) return versions.rbegin()->first;
  const std::uint64_t v = versions.empty() ? 1 : versions.rbegin()->first + 1;
  if (root_) {
    const auto dir = *root_ / graph.video_id;
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / version_file(v), serialize_graph(graph));
  }
  auto ptr = std::make_shared<const VideoKnowledgeGraph>(std::move(graph));
  versions[v] = ptr;
  auto next = std::make_shared<StoreSnapshot>(*snapshot());
  (*next)[ptr->video_id] = GraphVersion{v, ptr};
  std::lock_guard snap_lock(snap_mu_);
  snapshot_ = std::move(next);
  return v;
}

std::shared_ptr<const StoreSnapshot> GraphStore::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return snapshot_;
}

std::optional<GraphVersion> GraphStore::latest(const std::string& video_id) const {
  const auto snap = snapshot();
  auto it = snap->find(video_id);
  if (it == snap->end()) return std::nullopt;
  return it->second;
}

std::optional<GraphVersion> GraphStore::get(const std::string& video_id, std::uint64_t version) const {
  std::lock_guard lock(write_mu_);
  auto it = all_.find(video_id);
  if (it == all_.end()) return std::nullopt;
  auto v = it->second.find(version);
  if (v == it->second.end()) return std::nullopt;
  return GraphVersion{version, v->second};
}

std::vector<std::uint64_t> GraphStore::versions(const std::string& video_id) const {
  std::lock_guard lock(write_mu_);
  std::vector<std::uint64_t> out;
  if (auto it = all_.find(video_id); it != all_.end()) {
    for (const auto& [v, g] : it->second) out.push_back(v);
  }
  return out;
}

std::vector<std::string> GraphStore::videos() const {
  std::vector<std::string> out;
  for (const auto& [vid, gv] : *snapshot()) out.push_back(vid);
  return out;
}

bool GraphStore::empty() const { return snapshot()->empty(); }

}  // namespace vkg
