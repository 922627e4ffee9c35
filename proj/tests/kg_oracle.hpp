#pragma once

// Brute-force re-derivation of a video graph for tag-only KBs over a fixture
// lexicon whose lemmas each name a single noun sense. Shares no code with the
// graph builder beyond the KB types.

#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "vkg/kb.hpp"
#include "vkg/kg.hpp"

namespace vkg::oracle {

struct OracleEvidence {
  double t = 0.0;
  std::set<std::string> words;
  friend bool operator==(const OracleEvidence&, const OracleEvidence&) = default;
};

struct OracleNode {
  bool direct = false;
  std::map<std::pair<std::uint32_t, std::uint64_t>, OracleEvidence> evidence;
};

struct OracleGraph {
  std::map<std::string, OracleNode> nodes;
  std::set<std::pair<std::string, std::string>> edges;
};

class KgOracle {
 public:
  explicit KgOracle(const std::string& fixture_text) {
    std::istringstream in(fixture_text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cols;
      std::string col;
      std::istringstream ls(line);
      while (std::getline(ls, col, '|')) cols.push_back(col);
      cols.resize(4);
      const std::string& id = cols[0];
      auto& ps = parents_[id];
      std::istringstream hs(cols[3]);
      std::string h;
      while (std::getline(hs, h, ',')) {
        if (!h.empty()) ps.push_back(h);
      }
      if (id.find(".n.") == std::string::npos) continue;
      std::istringstream lemmas(cols[1]);
      std::string l;
      while (std::getline(lemmas, l, ',')) noun_of_[l] = id;
    }
  }

  std::set<std::string> closure(const std::string& id) const {
    std::set<std::string> out{id};
    std::deque<std::string> todo{id};
    while (!todo.empty()) {
      for (const auto& p : parents_.at(todo.front())) {
        if (out.insert(p).second) todo.push_back(p);
      }
      todo.pop_front();
    }
    return out;
  }

  int longest_depth(const std::string& id) const {
    int d = 0;
    for (const auto& p : parents_.at(id)) d = std::max(d, longest_depth(p) + 1);
    return d;
  }

  int shortest_depth(const std::string& id) const {
    const auto& ps = parents_.at(id);
    if (ps.empty()) return 0;
    int d = 1 << 20;
    for (const auto& p : ps) d = std::min(d, shortest_depth(p) + 1);
    return d;
  }

  std::string lch(const std::string& a, const std::string& b) const {
    const auto ca = closure(a);
    const auto cb = closure(b);
    std::string best;
    int best_depth = -1;
    for (const auto& c : ca) {  // ascending ids, so strict > keeps the smallest on ties
      if (!cb.count(c)) continue;
      const int d = longest_depth(c);
      if (d > best_depth) {
        best = c;
        best_depth = d;
      }
    }
    return best;
  }

  /// Edges (u, p) with u on a path from `from` and `to` reachable from p.
  std::set<std::pair<std::string, std::string>> path_edges(const std::string& from, const std::string& to) const {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& u : closure(from)) {
      if (u == to) continue;
      for (const auto& p : parents_.at(u)) {
        if (closure(p).count(to)) out.emplace(u, p);
      }
    }
    return out;
  }

  /// Tag words are lowercased, spaces become '_' and the lemma table is hit directly.
  std::optional<std::string> sense_of(const std::string& tag) const {
    std::string key;
    for (char c : tag) key += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto it = noun_of_.find(key);
    if (it == noun_of_.end()) return std::nullopt;
    return it->second;
  }

  OracleGraph build(const VideoKnowledgeBase& kb) const {
    OracleGraph g;
    // every (window, frame, word) contribution
    std::vector<std::tuple<std::uint32_t, std::uint64_t, double, std::string, std::string>> contributions;
    for (const auto& w : kb.windows) {
      for (const auto& f : w.keyframes) {
        std::set<std::string> frame_senses;
        for (const auto& t : f.tags) {
          auto s = sense_of(t.label);
          if (!s) continue;
          contributions.emplace_back(w.index, f.frame.frame_index, f.frame.timestamp, to_word(t.label), *s);
          frame_senses.insert(*s);
          g.nodes[*s].direct = true;
        }
        for (auto a = frame_senses.begin(); a != frame_senses.end(); ++a) {
          for (auto b = std::next(a); b != frame_senses.end(); ++b) {
            const auto h = lch(*a, *b);
            g.nodes[h];
            for (const auto& x : {*a, *b}) {
              for (const auto& e : path_edges(x, h)) {
                g.edges.insert(e);
                g.nodes[e.first];
                g.nodes[e.second];
              }
            }
          }
        }
      }
    }
    // evidence = contributions whose sense reaches the node through the merged edges
    std::map<std::string, std::set<std::string>> up;
    for (const auto& [id, n] : g.nodes) {
      std::set<std::string> seen{id};
      std::deque<std::string> todo{id};
      while (!todo.empty()) {
        for (const auto& [c, p] : g.edges) {
          if (c == todo.front() && seen.insert(p).second) todo.push_back(p);
        }
        todo.pop_front();
      }
      up[id] = seen;
    }
    for (const auto& [w, f, t, word, sense] : contributions) {
      for (const auto& target : up[sense]) {
        auto& ev = g.nodes[target].evidence[{w, f}];
        ev.t = t;
        ev.words.insert(word);
      }
    }
    return g;
  }

 private:
  static std::string to_word(const std::string& label) {
    std::string out;
    for (char c : label) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  }

  std::map<std::string, std::vector<std::string>> parents_;
  std::map<std::string, std::string> noun_of_;
};

/// Structural comparison with the oracle; returns "" when equal.
inline std::string diff(const VideoKnowledgeGraph& g, const OracleGraph& o) {
  if (g.edges != o.edges) return "edges differ";
  if (g.nodes.size() != o.nodes.size()) return "node count differs";
  for (const auto& [id, on] : o.nodes) {
    const auto* n = g.find(id);
    if (n == nullptr) return "missing node " + id;
    if (n->direct != on.direct) return "direct flag of " + id;
    if (n->evidence.size() != on.evidence.size()) return "evidence size of " + id;
    for (const auto& [key, oe] : on.evidence) {
      auto it = n->evidence.find(FrameKey{key.first, key.second});
      if (it == n->evidence.end()) return "evidence frame of " + id;
      if (it->second.words != oe.words || it->second.timestamp != oe.t) return "evidence words of " + id;
      if (it->second.kinds != std::set<std::string>{"tag"} || !it->second.boxes.empty()) return "evidence kinds of " + id;
    }
  }
  return "";
}

}  // namespace vkg::oracle
