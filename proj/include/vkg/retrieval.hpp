#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vkg/kg.hpp"
#include "vkg/lexicon.hpp"

namespace vkg {

struct QueryGraph {
  std::string origin;
  std::string lexicon_fingerprint;
  std::map<std::string, bool> nodes;  // id -> originated from a query word
  std::set<Edge> edges;

  std::vector<std::string> direct() const;
  friend bool operator==(const QueryGraph&, const QueryGraph&) = default;
};

/// Virtual names are matched by slug first, then multi-word lemmas, then the
/// remaining words go through the frame word extractor with the query as WSD
/// context. A virtual term's parent joins as a connective node. Throws
/// no-known-terms.
QueryGraph query_to_graph(const std::string& text, const LexiconDb& lexicon);

/// Query from a media graph built by the ingest pipeline.
QueryGraph query_from_graph(const VideoKnowledgeGraph& graph, std::string origin);

struct Overlap {
  double score = 0.0;
  std::vector<std::string> matched;  // sorted
  int specificity = 0;               // sum of lexicon depths of matched nodes
};

/// |Q_direct ∩ V| / |Q_direct| by synset id. Throws fingerprint-mismatch.
Overlap overlap_score(const QueryGraph& query, const VideoKnowledgeGraph& video, const LexiconDb& lexicon);

struct RankedFrame {
  FrameRef frame;
  std::size_t votes = 0;  // matched nodes whose evidence holds the frame
  friend bool operator==(const RankedFrame&, const RankedFrame&) = default;
};

struct RetrievalHit {
  std::string video_id;
  std::uint64_t graph_version = 0;
  double score = 0.0;
  int specificity = 0;
  std::vector<std::string> matched;
  std::vector<RankedFrame> frames;  // votes desc, then timestamp, then frame
};

struct GraphVersion {
  std::uint64_t version = 0;
  std::shared_ptr<const VideoKnowledgeGraph> graph;
};

/// Latest version of every video.
using StoreSnapshot = std::map<std::string, GraphVersion>;

/// Versioned graph store. Readers take immutable snapshots; writers persist
/// the new version and then swap it in. Every version stays addressable.
/// On disk: <root>/<video_id>/v<NNNNNN>.json
class GraphStore {
 public:
  GraphStore() = default;
  /// Loads every version under `root`. Throws store-corrupt.
  explicit GraphStore(std::filesystem::path root);

  /// Returns the new version, or the latest one when `graph` equals it.
  /// Throws invalid-video-id.
  std::uint64_t put(VideoKnowledgeGraph graph);

  std::shared_ptr<const StoreSnapshot> snapshot() const;
  std::optional<GraphVersion> latest(const std::string& video_id) const;
  std::optional<GraphVersion> get(const std::string& video_id, std::uint64_t version) const;
  std::vector<std::uint64_t> versions(const std::string& video_id) const;
  std::vector<std::string> videos() const;
  bool empty() const;
  const std::optional<std::filesystem::path>& root() const { return root_; }

 private:
  std::optional<std::filesystem::path> root_;
  mutable std::mutex write_mu_;
  std::map<std::string, std::map<std::uint64_t, std::shared_ptr<const VideoKnowledgeGraph>>> all_;
  mutable std::mutex snap_mu_;
  std::shared_ptr<const StoreSnapshot> snapshot_ = std::make_shared<StoreSnapshot>();
};

/// Throws invalid-video-id unless the id is a safe path component.
void check_video_id(const std::string& video_id);

struct RetrieveOptions {
  std::size_t top_k = 10;
  /// Frames listed per hit; 0 keeps all.
  std::size_t max_frames = 0;
};

/// Scores every graph of the snapshot; hits with score 0 are left out.
/// Ranked by (score desc, specificity desc, video_id asc). Graphs built from a
/// different lexicon are skipped and listed in `skipped`.
std::vector<RetrievalHit> retrieve(const QueryGraph& query, const StoreSnapshot& snapshot, const LexiconDb& lexicon,
                                   const RetrieveOptions& options = {}, std::vector<std::string>* skipped = nullptr);

std::vector<RetrievalHit> retrieve(const std::string& text, const GraphStore& store, const LexiconDb& lexicon,
                                   const RetrieveOptions& options = {});

nlohmann::ordered_json hit_to_json(const RetrievalHit& hit);

}  // namespace vkg
