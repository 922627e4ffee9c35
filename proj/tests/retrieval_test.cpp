#include <random>

#include "doctest.h"
#include "kb_builders.hpp"
#include "generators.hpp"
#include "kg_oracle.hpp"
#include "retrieval_oracle.hpp"
#include "test_util.hpp"
#include "vkg/error.hpp"
#include "vkg/retrieval.hpp"
#include "vkg/text.hpp"

using namespace vkg;
using testing::kb_of;

namespace {

const std::string kData = VKG_TEST_DATA_DIR;

const LexiconDb& fixture_lexicon() {
  static const LexiconDb db = LexiconDb::load(kData + "/kg_fixture.txt");
  return db;
}

std::string error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "no-error";
}

std::set<std::string> direct_of(const QueryGraph& q) {
  const auto d = q.direct();
  return {d.begin(), d.end()};
}



}  // namespace

TEST_CASE("query_to_graph on the fixture lexicon") {
  const auto& lex = fixture_lexicon();
  auto q = query_to_graph("policeman and chef", lex);
  CHECK(direct_of(q) == std::set<std::string>{"policeman.n.01", "chef.n.01"});
  CHECK(q.nodes.count("person.n.01"));
  CHECK(q.nodes.at("person.n.01") == false);
  CHECK(q.edges.count({"policeman.n.01", "person.n.01"}));
  CHECK(q.lexicon_fingerprint == lex.fingerprint());

  CHECK(error_code([&] { query_to_graph("qwxz", lex); }) == "no-known-terms");
  CHECK(error_code([&] { query_to_graph("", lex); }) == "no-known-terms");

  q = query_to_graph("a police officer", lex);
  CHECK(direct_of(q) == std::set<std::string>{"policeman.n.01"});
  q = query_to_graph("a man riding a horse", lex);
  CHECK(direct_of(q) == std::set<std::string>{"man.n.01", "horse.n.01", "ride.v.01"});
  q = query_to_graph("Dogs", lex);
  CHECK(direct_of(q) == std::set<std::string>{"dog.n.01"});
}

TEST_CASE("query_to_graph matches virtual names first") {
  auto lex = LexiconDb::load(kData + "/kg_fixture.txt");
  const auto v = lex.register_virtual("ship.n.01", "sovermenny ship", "", "t0");
  const auto q = query_to_graph("a sovermenny ship in the middle of the sea", lex);
  CHECK(direct_of(q) == std::set<std::string>{v.id, "sea.n.01"});
  CHECK(q.nodes.at("ship.n.01") == false);
  CHECK(q.edges.count({v.id, "ship.n.01"}));
  CHECK(q.nodes.count("object.n.01"));  // ship and sea meet at their common hypernym
  for (const auto& [c, p] : q.edges) CHECK(lex.is_ancestor_or_self(p, c));

  // a plain "ship" still resolves to the real synset
  CHECK(direct_of(query_to_graph("a ship", lex)) == std::set<std::string>{"ship.n.01"});
}

TEST_CASE("query_to_graph on real WordNet") {
  const std::filesystem::path dir = VKG_WORDNET_DIR;
  if (!std::filesystem::exists(dir / "data.noun")) return;
  auto wn = LexiconDb::load(dir);
  auto q = query_to_graph("policeman and chef", wn);
  CHECK(q.nodes.count("person.n.01"));
  CHECK(q.nodes.at("person.n.01") == false);

  const auto v = wn.register_virtual("ship.n.01", "sovermenny ship", "", "t0");
  q = query_to_graph("a sovermenny ship in the middle of the sea", wn);
  CHECK(q.nodes.at(v.id));
  CHECK(q.nodes.count("ship.n.01"));
  CHECK(q.edges.count({v.id, "ship.n.01"}));
  CHECK(q.nodes.count("sea.n.01"));
}

TEST_CASE("overlap_score") {
  const auto& lex = fixture_lexicon();
  const auto g = video_to_kg(kb_of("v", {{{"dog", "ship"}}}), lex);
  const auto q = query_to_graph("dog cat ship", lex);
  auto ov = overlap_score(q, g, lex);
  CHECK(ov.score == doctest::Approx(2.0 / 3.0));
  CHECK(ov.matched == std::vector<std::string>{"dog.n.01", "ship.n.01"});
  CHECK(ov.specificity == 11);  // dog at depth 6, ship at depth 5

  CHECK(overlap_score(query_to_graph("dog ship", lex), g, lex).score == 1.0);
  ov = overlap_score(query_to_graph("idea", lex), g, lex);
  CHECK(ov.score == 0.0);
  CHECK(ov.matched.empty());
  // connective nodes of the video do not count for a query word they only generalize
  CHECK(overlap_score(query_to_graph("policeman", lex), video_to_kg(kb_of("v", {{{"man", "chef"}}}), lex), lex).score ==
        0.0);

  auto other = g;
  other.lexicon_fingerprint = "feed";
  CHECK(error_code([&] { overlap_score(q, other, lex); }) == "fingerprint-mismatch");
}

TEST_CASE("overlap properties on random graphs") {
  const auto& lex = fixture_lexicon();
  std::mt19937 rng(21);
  for (int round = 0; round < 60; ++round) {
    const auto g = video_to_kg(testing::random_noun_kb(rng, "v", testing::kNouns), lex);
    std::string text;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 4); i < n; ++i) text += testing::kNouns[rng() % testing::kNouns.size()] + " ";
    const auto q = query_to_graph(text, lex);
    const auto ov = overlap_score(q, g, lex);
    CHECK(ov.score >= 0.0);
    CHECK(ov.score <= 1.0);
    bool subset = true;
    for (const auto& id : q.direct()) subset = subset && g.nodes.count(id) > 0;
    CHECK((ov.score == 1.0) == subset);
    // monotone under node additions
    auto bigger = g;
    const auto extra = lex.synsets_of(testing::kNouns[rng() % testing::kNouns.size()], 'n').front()->id;
    bigger.nodes.try_emplace(extra, SynsetNode{extra, {}, true});
    CHECK(overlap_score(q, bigger, lex).score >= ov.score);
  }
}

TEST_CASE("retrieve equals a brute-force scan") {
  const auto& lex = fixture_lexicon();
  const oracle::KgOracle oracle(read_file(kData + "/kg_fixture.txt"));
  std::mt19937 rng(99);
  for (int store_round = 0; store_round < 12; ++store_round) {
    GraphStore store;
    const int videos = 1 + static_cast<int>(rng() % 6);
    for (int v = 0; v < videos; ++v) store.put(video_to_kg(testing::random_noun_kb(rng, "vid" + std::to_string(v), testing::kNouns), lex));
    const auto snap = store.snapshot();
    for (int qi = 0; qi < 8; ++qi) {
      std::string text;
      for (int i = 0, n = 1 + static_cast<int>(rng() % 3); i < n; ++i) text += testing::kNouns[rng() % testing::kNouns.size()] + " ";
      const auto q = query_to_graph(text, lex);
      const std::size_t top_k = 1 + rng() % 6;
      const auto hits = retrieve(q, *snap, lex, RetrieveOptions{top_k, 0});
      const auto expect = oracle::scan(direct_of(q), *snap, oracle, top_k);
      REQUIRE(hits.size() == expect.size());
      for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].video_id == expect[i].video);
        CHECK(hits[i].score == expect[i].score);
        CHECK(hits[i].specificity == expect[i].specificity);
        CHECK(hits[i].matched == expect[i].matched);
        // frames come from matched evidence, ranked by votes then time
        const auto& g = *snap->at(hits[i].video_id).graph;
        for (std::size_t k = 0; k < hits[i].frames.size(); ++k) {
          const auto& f = hits[i].frames[k];
          std::size_t votes = 0;
          for (const auto& id : hits[i].matched) votes += g.nodes.at(id).evidence.count(FrameKey{f.frame.window_index, f.frame.frame_index});
          CHECK(votes == f.votes);
          CHECK(votes > 0);
          if (k > 0) {
            const auto& p = hits[i].frames[k - 1];
            CHECK((p.votes > f.votes || (p.votes == f.votes && p.frame.timestamp <= f.frame.timestamp)));
          }
        }
      }
    }
  }
}

TEST_CASE("planted-concept corpus") {
  const auto& lex = fixture_lexicon();
  // dog + ship planted in b and d; knife planted in a, c, e; nothing else mentions them
  const std::vector<std::string> filler{"man", "woman", "car", "sea", "idea", "kitchen", "horse"};
  std::mt19937 rng(5);
  GraphStore store;
  for (const std::string id : {"a", "b", "c", "d", "e"}) {
    auto kb = testing::random_noun_kb(rng, id, filler);
    auto& frame = kb.windows.back().keyframes.back();
    if (id == "b" || id == "d") {
      frame.tags.push_back(Tag{frame.frame, "dog", 0.9});
      frame.tags.push_back(Tag{frame.frame, "ship", 0.9});
    } else {
      frame.tags.push_back(Tag{frame.frame, "knife", 0.9});
    }
    store.put(video_to_kg(kb, lex));
  }
  auto hits = retrieve("a dog on a ship", store, lex);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].video_id == "b");
  CHECK(hits[1].video_id == "d");
  for (const auto& h : hits) {
    CHECK(h.score == 1.0);
    CHECK(h.specificity == 11);
    CHECK(h.frames.front().votes == 2);
  }
  hits = retrieve("knife", store, lex);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].video_id == "a");
  CHECK(hits[2].video_id == "e");
  hits = retrieve("knife", store, lex, RetrieveOptions{1, 0});
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].video_id == "a");

  // a more specific full match outranks a general one at equal score
  GraphStore two;
  two.put(video_to_kg(kb_of("x", {{{"dog"}}}), lex));
  two.put(video_to_kg(kb_of("y", {{{"dog", "cat"}}}), lex));
  hits = retrieve("dog animal", two, lex);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].video_id == "y");  // y has animal.n.01 as the LCH of dog and cat
  CHECK(hits[0].score == 1.0);
  CHECK(hits[1].score == 0.5);

  CHECK(retrieve("dog", GraphStore{}, lex).empty());
}

TEST_CASE("virtual query retrieves only re-indexed videos") {
  auto lex = LexiconDb::load(kData + "/kg_fixture.txt");
  const auto v = lex.register_virtual("face_mask.n.01", "kn95 face mask", "", "t0");
  GraphStore store;
  store.put(video_to_kg(kb_of("m1", {{{"face mask", "man"}}}), lex));
  const auto g2 = video_to_kg(kb_of("m2", {{{"mask", "woman"}}, {{"knife"}}}), lex);
  store.put(g2);
  CHECK(retrieve("kn95 face mask", store, lex).empty());
  const Evidence ev{{FrameKey{0, 3}, EvidenceInfo{0.5, {"classifier"}, {}, {Box{0.1, 0.1, 0.5, 0.5}}}}};
  CHECK(store.put(attach_virtual(g2, v.id, ev, lex)) == 2);
  const auto hits = retrieve("kn95 face mask", store, lex);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].video_id == "m2");
  CHECK(hits[0].graph_version == 2);
  CHECK(hits[0].matched == std::vector<std::string>{v.id});
  REQUIRE(hits[0].frames.size() == 1);
  CHECK(hits[0].frames[0].frame == FrameRef{"m2", 0, 3, 0.5});
  // the plain parent term still finds both
  CHECK(retrieve("face mask", store, lex).size() == 2);
}

TEST_CASE("query_from_graph") {
  const auto& lex = fixture_lexicon();
  const auto media = video_to_kg(kb_of("clip", {{{"dog", "cat"}}}), lex);
  const auto q = query_from_graph(media, "clip.mp4");
  CHECK(direct_of(q) == std::set<std::string>{"dog.n.01", "cat.n.01"});
  CHECK(q.nodes.at("animal.n.01") == false);
  CHECK(error_code([] { query_from_graph(VideoKnowledgeGraph{}, "x"); }) == "no-known-terms");
}

TEST_CASE("graph store versions and persistence") {
  const auto& lex = fixture_lexicon();
  testing::TempDir dir;
  const auto g1 = video_to_kg(kb_of("vid", {{{"dog"}}}), lex);
  const auto g2 = video_to_kg(kb_of("vid", {{{"dog", "cat"}}}), lex);
  {
    GraphStore store(dir.path());
    CHECK(store.empty());
    CHECK(store.put(g1) == 1);
    const auto before = store.snapshot();
    CHECK(store.put(g1) == 1);  // unchanged graph, same version
    CHECK(store.put(g2) == 2);
    CHECK(*before->at("vid").graph == g1);  // old snapshots are never touched
    CHECK(*store.snapshot()->at("vid").graph == g2);
    CHECK(store.versions("vid") == std::vector<std::uint64_t>{1, 2});
    CHECK(*store.get("vid", 1)->graph == g1);
    CHECK_FALSE(store.get("vid", 3));
    CHECK(std::filesystem::exists(dir.path() / "vid" / "v000002.json"));
    auto bad = g1;
    bad.video_id = "../escape";
    CHECK(error_code([&] { store.put(bad); }) == "invalid-video-id");
  }
  GraphStore reopened(dir.path());
  CHECK(reopened.videos() == std::vector<std::string>{"vid"});
  CHECK(reopened.latest("vid")->version == 2);
  CHECK(*reopened.latest("vid")->graph == g2);
  CHECK(*reopened.get("vid", 1)->graph == g1);

  write_file_atomic(dir.path() / "vid" / "v000003.json", "{broken");
  CHECK(error_code([&] { GraphStore again(dir.path()); }) == "store-corrupt");
}

TEST_CASE("hit json layout") {
  RetrievalHit h{"v", 2, 0.5, 7, {"dog.n.01"}, {RankedFrame{FrameRef{"v", 1, 9, 2.5}, 1}}};
  const auto j = hit_to_json(h);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"video_id", "graph_version", "score", "specificity", "matched", "frames"});
  CHECK(j["frames"][0]["frame"] == 9);
}
