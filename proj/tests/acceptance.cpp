// One line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "generators.hpp"
#include "kb_builders.hpp"
#include "kg_oracle.hpp"
#include "oracles.hpp"
#include "retrieval_oracle.hpp"
#include "test_util.hpp"
#include "vkg/app.hpp"
#include "vkg/captions.hpp"
#include "vkg/continual.hpp"
#include "vkg/error.hpp"
#include "vkg/keyframes.hpp"
#include "vkg/kg.hpp"
#include "vkg/pipeline.hpp"
#include "vkg/retrieval.hpp"
#include "vkg/segmentation.hpp"
#include "vkg/text.hpp"

using namespace vkg;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

const std::string kData = VKG_TEST_DATA_DIR;

/// Collects the first few failed expectations of one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    if (failed_.size() < 3) failed_.push_back(what);
    ++failures_;
  }
  bool ok() const { return failures_ == 0; }
  std::string summary() const {
    if (ok()) return std::to_string(total_) + " checks";
    std::string out = std::to_string(failures_) + "/" + std::to_string(total_) + " failed:";
    for (const auto& f : failed_) out += " [" + f + "]";
    return out;
  }

 private:
  std::size_t total_ = 0;
  std::size_t failures_ = 0;
  std::vector<std::string> failed_;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

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

// ---- criteria ------------------------------------------------------------------------

void kg_oracle_equivalence(Check& c) {
  const auto& lex = fixture_lexicon();
  const oracle::KgOracle oracle(read_file(kData + "/kg_fixture.txt"));
  std::mt19937 rng(2718);
  const auto start = Clock::now();
  for (int i = 0; i < 12; ++i) {
    const auto kb = testing::random_tag_kb(rng, "v" + std::to_string(i));
    const auto d = oracle::diff(video_to_kg(kb, lex), oracle.build(kb));
    c.expect(d.empty(), "fixture " + std::to_string(i) + ": " + d);
  }
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 5.0, "runtime " + fmt(elapsed) + " s");
}

void worked_example(Check& c) {
  const auto g = video_to_kg(testing::kb_of("v", {{{"policeman", "chef"}}}), fixture_lexicon());
  std::set<std::string> ids;
  for (const auto& [id, _] : g.nodes) ids.insert(id);
  // chef sits below worker in the fixture hierarchy
  c.expect(ids == std::set<std::string>{"policeman.n.01", "chef.n.01", "worker.n.01", "person.n.01"}, "node set");
  c.expect(g.edges == std::set<Edge>{{"policeman.n.01", "person.n.01"},
                                     {"chef.n.01", "worker.n.01"},
                                     {"worker.n.01", "person.n.01"}},
           "edges");
  const auto* person = g.find("person.n.01");
  c.expect(person && !person->direct, "person is a connective node");
  if (person) {
    c.expect(person->evidence.size() == 1 && person->evidence.count(FrameKey{0, 3}), "person evidence frame");
    c.expect(person->evidence.count(FrameKey{0, 3}) &&
                 person->evidence.at(FrameKey{0, 3}).words == std::set<std::string>{"policeman", "chef"},
             "person evidence words");
  }
  c.expect(g.find("policeman.n.01") && g.find("policeman.n.01")->direct, "policeman direct");
  c.expect(g.find("chef.n.01") && g.find("chef.n.01")->direct, "chef direct");
}

void keyframe_math(Check& c) {
  const auto start = Clock::now();
  auto sw = fixtures::scene_window("v", 0, {40, 128, 215}, 20);
  c.expect(sw.window.frames().size() == 60, "60 frames");
  const auto sel = select_keyframes(sw.window);
  c.expect(sel.chosen_k == 3, "k = " + std::to_string(sel.chosen_k));
  std::set<std::uint64_t> expected;
  for (int scene = 0; scene < 3; ++scene) {
    std::uint64_t best = 0;
    double best_var = -1.0;
    for (std::size_t i = 0; i < sw.gray.size(); ++i) {
      if (sw.scene_of_frame[i] != scene) continue;
      const double v = oracle::laplacian_variance(sw.gray[i], 32, 32);
      if (v > best_var) {
        best_var = v;
        best = i;
      }
    }
    expected.insert(best);
  }
  std::set<std::uint64_t> got;
  for (const auto& k : sel.keyframes) got.insert(k.frame.frame_index);
  c.expect(got == expected, "keyframes are the sharpest frame of each scene");
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 2.0, "runtime " + fmt(elapsed) + " s");
}

std::vector<Point> blob_points(std::mt19937& rng, const std::vector<Point>& centers, int per, double spread) {
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<Point> out;
  for (const auto& center : centers) {
    for (int i = 0; i < per; ++i) {
      Point p = center;
      for (auto& v : p) v += noise(rng);
      out.push_back(p);
    }
  }
  return out;
}

void kmeans_properties(Check& c) {
  std::mt19937 rng(77);
  const auto pts = blob_points(rng, {{0, 0}, {3, 1}, {1, 4}, {6, 6}}, 15, 2.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    KMeansOptions opt;
    opt.seed = seed;
    opt.restarts = 1;
    const auto r = kmeans(pts, 4, opt);
    bool monotone = true;
    for (std::size_t i = 1; i < r.inertia_trace.size(); ++i) monotone &= r.inertia_trace[i] <= r.inertia_trace[i - 1];
    c.expect(monotone, "inertia rises for seed " + std::to_string(seed));
  }
  // clustered fixtures: 2 or 3 groups, 6 to 12 points
  std::uniform_real_distribution<double> spot(-20.0, 20.0);
  for (int fixture = 0; fixture < 10; ++fixture) {
    const int groups = 2 + fixture % 2;
    std::vector<Point> centers;
    for (int g = 0; g < groups; ++g) centers.push_back({spot(rng), spot(rng)});
    const int per = (6 + fixture % 7) / groups;
    const auto small = blob_points(rng, centers, per, 1.5);
    for (int k = 1; k <= 3; ++k) {
      const double got = kmeans(small, static_cast<std::size_t>(k)).inertia;
      const double best = oracle::optimal_inertia(small, k);
      c.expect(std::abs(got - best) <= 1e-9,
               "fixture " + std::to_string(fixture) + " k=" + std::to_string(k) + ": " + fmt(got) + " vs " + fmt(best));
    }
  }
}

Sentence sentence(const std::string& text, double start) {
  Sentence s;
  s.text = text;
  s.start = start;
  s.end = start + 0.9;
  return s;
}

void segmentation(Check& c) {
  struct Script {
    double theta;
    std::vector<double> scores;  // score of accreting sentence 2, 3, ...
    std::vector<std::size_t> sizes;
  };
  const std::vector<Script> scripts{
      {0.5, {0.9, 0.1, 0.7, 0.3}, {2, 2, 1}},
      {0.15, {0.2, 0.16, 0.9, 0.5, 0.3}, {6}},
      {0.15, {0.1, 0.1, 0.1}, {1, 1, 1, 1}},
      {0.6, {0.7, 0.65, 0.59, 0.61, 0.2, 0.8}, {3, 2, 2}},
      {0.3, {0.05, 0.9, 0.31, 0.29, 0.3001}, {1, 3, 2}},
  };
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    const auto& s = scripts[i];
    std::vector<Sentence> sentences{sentence("s0", 0)};
    std::map<std::string, double> by_text;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      sentences.push_back(sentence("s" + std::to_string(j + 1), static_cast<double>(j + 1)));
      by_text[sentences.back().text] = s.scores[j];
    }
    SegmenterConfig cfg;
    cfg.coherency_threshold = s.theta;
    const auto paras = build_paragraphs(sentences, cfg, [&](const std::vector<Sentence>&, const Sentence& next) {
      return by_text.at(next.text);
    });
    std::vector<std::size_t> sizes;
    for (const auto& p : paras) sizes.push_back(p.sentences.size());
    c.expect(sizes == s.sizes, "script " + std::to_string(i));
  }

  const std::vector<std::string> vocab{"car", "road", "engine", "chef", "knife", "kitchen", "dog", "park", "ball"};
  std::mt19937 rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Sentence> sentences;
    const int n = 1 + static_cast<int>(rng() % 25);
    for (int i = 0; i < n; ++i) {
      std::string text;
      for (int j = 0, len = 1 + static_cast<int>(rng() % 4); j < len; ++j) text += vocab[rng() % vocab.size()] + " ";
      sentences.push_back(sentence(text, i));
    }
    std::size_t previous = 0;
    for (int step = 0; step <= 20; ++step) {
      SegmenterConfig cfg;
      cfg.coherency_threshold = step * 0.05;
      const auto paras = build_paragraphs(sentences, cfg);
      std::vector<Sentence> flat;
      for (const auto& p : paras) flat.insert(flat.end(), p.sentences.begin(), p.sentences.end());
      c.expect(flat == sentences, "partition, trial " + std::to_string(trial));
      c.expect(paras.size() >= previous, "monotone theta, trial " + std::to_string(trial));
      previous = paras.size();
    }
  }
}

void triplet_filter(Check& c) {
  std::mt19937 rng(1234);
  std::unordered_map<std::string, double> ratings;
  std::vector<std::string> words;
  for (int i = 0; i < 40; ++i) {
    words.push_back("w" + std::to_string(i));
    ratings[words.back()] = 1.0 + (rng() % 401) / 100.0;
  }
  const ConcretenessLexicon lex(ratings);
  std::vector<Triplet> ts;
  for (int i = 0; i < 500; ++i) {
    auto pick = [&] { return rng() % 10 == 0 ? std::string("unrated") : words[rng() % words.size()]; };
    Triplet t;
    t.subject = pick();
    t.relation = "near";
    t.object = pick();
    ts.push_back(t);
  }
  for (double tau = 1.0; tau <= 5.0; tau += 0.125) {
    std::vector<Triplet> expected;
    for (const auto& t : ts) {
      auto s = ratings.find(t.subject);
      auto o = ratings.find(t.object);
      if (s != ratings.end() && o != ratings.end() && (s->second + o->second) / 2 >= tau) expected.push_back(t);
    }
    c.expect(filter_triplets(ts, lex, tau) == expected, "tau " + fmt(tau));
  }

  const auto lines = read_word_list(kData + "/caption_corpus.txt");
  c.expect(lines.size() == 20, "corpus has 20 sentences");
  std::ostringstream out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Captions caps;
    caps.items.push_back(Caption{FrameRef{"corpus", 0, i, static_cast<double>(i)}, lines[i], std::nullopt, 0});
    const auto rel = extract_relations(caps, ConcretenessLexicon::shipped(), RelationConfig{});
    for (const auto& t : rel.items) out << i << '|' << t.subject << '|' << t.relation << '|' << t.object << '\n';
  }
  c.expect(out.str() == read_file(kData + "/caption_corpus.golden"), "golden corpus");
}

void retrieval(Check& c) {
  const auto& lex = fixture_lexicon();
  const oracle::KgOracle oracle(read_file(kData + "/kg_fixture.txt"));

  // planted corpus: "dog on a ship" in b and d, "knife" in a, c and e, filler elsewhere
  const std::vector<std::string> filler{"man", "woman", "car", "sea", "idea", "kitchen", "horse"};
  std::mt19937 rng(31);
  GraphStore store;
  for (const std::string id : {"a", "b", "c", "d", "e"}) {
    auto kb = testing::random_noun_kb(rng, id, filler);
    auto& frame = kb.windows.back().keyframes.back();
    const std::vector<std::string> planted =
        id == "b" || id == "d" ? std::vector<std::string>{"dog", "ship"} : std::vector<std::string>{"knife"};
    for (const auto& p : planted) frame.tags.push_back(Tag{frame.frame, p, 0.9});
    store.put(video_to_kg(kb, lex));
  }
  auto ids = [](const std::vector<RetrievalHit>& hits) {
    std::vector<std::string> out;
    for (const auto& h : hits) out.push_back(h.video_id);
    return out;
  };
  auto full_matches = [](const std::vector<RetrievalHit>& hits) {
    bool ok = true;
    for (const auto& h : hits) ok &= h.score == 1.0;
    return ok;
  };
  auto hits = retrieve("a dog on a ship", store, lex);
  c.expect(ids(hits) == std::vector<std::string>{"b", "d"}, "dog+ship planted set");
  c.expect(full_matches(hits), "dog+ship scores");
  hits = retrieve("knife", store, lex);
  c.expect(ids(hits) == std::vector<std::string>{"a", "c", "e"}, "knife planted set");
  c.expect(full_matches(hits), "knife scores");

  // a full match outranks a partial one; equal scores rank by specificity
  GraphStore ladder;
  ladder.put(video_to_kg(testing::kb_of("general", {{{"man", "woman"}}}), lex));
  ladder.put(video_to_kg(testing::kb_of("specific", {{{"chef", "policeman"}}}), lex));
  ladder.put(video_to_kg(testing::kb_of("other", {{{"ship"}}}), lex));
  hits = retrieve("chef person", ladder, lex);
  c.expect(ids(hits) == std::vector<std::string>{"specific", "general"}, "full match before partial");
  c.expect(hits.size() == 2 && hits[0].score == 1.0 && hits[1].score == 0.5, "full and partial scores");

  GraphStore pair;
  pair.put(video_to_kg(testing::kb_of("alpha", {{{"chef"}}}), lex));
  pair.put(video_to_kg(testing::kb_of("beta", {{{"horse"}}}), lex));
  hits = retrieve("chef horse", pair, lex);
  const bool horse_deeper = oracle.shortest_depth("horse.n.01") > oracle.shortest_depth("chef.n.01");
  c.expect(horse_deeper && ids(hits) == std::vector<std::string>{"beta", "alpha"}, "deeper match ranks first");

  std::mt19937 srng(99);
  for (int round = 0; round < 12; ++round) {
    GraphStore s;
    const int videos = 1 + static_cast<int>(srng() % 6);
    for (int v = 0; v < videos; ++v) {
      s.put(video_to_kg(testing::random_noun_kb(srng, "vid" + std::to_string(v), testing::kNouns), lex));
    }
    const auto snap = s.snapshot();
    for (int qi = 0; qi < 8; ++qi) {
      std::string text;
      for (int i = 0, n = 1 + static_cast<int>(srng() % 3); i < n; ++i) {
        text += testing::kNouns[srng() % testing::kNouns.size()] + " ";
      }
      const auto q = query_to_graph(text, lex);
      const std::size_t top_k = 1 + srng() % 6;
      const auto got = retrieve(q, *snap, lex, RetrieveOptions{top_k, 0});
      const auto d = q.direct();
      const auto expect = oracle::scan({d.begin(), d.end()}, *snap, oracle, top_k);
      bool same = got.size() == expect.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].video_id == expect[i].video && got[i].score == expect[i].score &&
               got[i].specificity == expect[i].specificity && got[i].matched == expect[i].matched;
      }
      c.expect(same, "scan mismatch for '" + text + "'");
    }
  }
}

void continual_learning(Check& c) {
  // separable 50-sample set
  std::mt19937 rng(8);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<LabeledSample> train;
  for (int i = 0; i < 50; ++i) {
    const bool pos = i % 2 == 0;
    const double m = pos ? 2.0 : -2.0;
    train.push_back(LabeledSample{{m + noise(rng), m + noise(rng), noise(rng)}, pos, {}, {}});
  }
  const auto clf = train_mini_classifier(train);
  int correct = 0;
  for (const auto& s : train) correct += apply_classifier(clf, s.features).accept == s.positive;
  c.expect(correct >= 49, "training accuracy " + std::to_string(correct) + "/50");

  // analytic gradient against central differences
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int round = 0; round < 100; ++round) {
    const std::size_t d = 1 + rng() % 6;
    const std::size_t n = 2 + rng() % 10;
    std::vector<std::vector<double>> xs(n, std::vector<double>(d));
    std::vector<int> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : xs[i]) v = g(rng);
      ys[i] = rng() % 2 ? 1 : -1;
    }
    std::vector<double> w(d);
    for (auto& v : w) v = g(rng);
    const double b = g(rng);
    const double lambda = (rng() % 3) * 0.1;
    const auto [gw, gb] = logistic_gradient(w, b, xs, ys, lambda);
    const double h = 1e-6;
    auto rel = [](double a, double fd) { return std::abs(a - fd) / std::max(1.0, std::abs(a) + std::abs(fd)); };
    for (std::size_t j = 0; j <= d; ++j) {
      auto wp = w, wm = w;
      double bp = b, bm = b;
      if (j < d) {
        wp[j] += h;
        wm[j] -= h;
      } else {
        bp += h;
        bm -= h;
      }
      const double fd = (logistic_loss(wp, bp, xs, ys, lambda) - logistic_loss(wm, bm, xs, ys, lambda)) / (2 * h);
      worst = std::max(worst, rel(j < d ? gw[j] : gb, fd));
    }
  }
  c.expect(worst < 1e-5, "gradient relative error " + std::to_string(worst));

  // planted classifier: mean brightness minus 128, even frames are bright
  auto lex = LexiconDb::load(kData + "/kg_fixture.txt");
  const auto v = lex.register_virtual("dog.n.01", "spotted dog", "", "2024-01-01T00:00:00Z");
  GraphStore store;
  store.put(video_to_kg(testing::kb_of("a", {{{"dog"}, {"dog", "cat"}}, {{"dog"}}}), lex));
  store.put(video_to_kg(testing::kb_of("b", {{{"cat"}, {"dog"}}}), lex));
  MiniClassifier planted;
  planted.id = "planted";
  planted.weights = {1.0};
  planted.bias = -128.0;
  const auto loader = [](const FrameRef& f) {
    return ImageBuffer::filled(16, 16, 1, f.frame_index % 2 == 0 ? 220 : 30, f);
  };
  const auto brightness = [](const ImageBuffer& crop, const Box&) {
    double s = 0.0;
    for (auto p : crop.pixels()) s += p;
    return std::vector<double>{s / static_cast<double>(crop.pixels().size())};
  };
  // independent expectation: every dog frame with an even index
  std::map<std::string, std::set<FrameKey>> expected;
  for (const auto& [vid, gv] : *store.snapshot()) {
    for (const auto& [key, _] : gv.graph->nodes.at("dog.n.01").evidence) {
      if (key.frame % 2 == 0) expected[vid].insert(key);
    }
  }
  const auto before = store.snapshot();
  reindex(v.id, planted, store, lex, loader, brightness);
  std::map<std::string, std::set<FrameKey>> got;
  bool monotone = true;
  for (const auto& [vid, gv] : *store.snapshot()) {
    if (const auto* node = gv.graph->find(v.id)) {
      for (const auto& [key, info] : node->evidence) {
        got[vid].insert(key);
        monotone &= info.kinds == std::set<std::string>{"classifier"};
      }
    }
    for (const auto& [id, n] : before->at(vid).graph->nodes) {
      monotone &= gv.graph->find(id) && evidence_contains(gv.graph->find(id)->evidence, n.evidence);
    }
  }
  c.expect(!expected.empty() && got == expected, "virtual evidence equals accepted crops");
  c.expect(monotone, "existing nodes and evidence kept");
  const auto after = store.snapshot();
  reindex(v.id, planted, store, lex, loader, brightness);
  bool idempotent = true;
  for (const auto& [vid, gv] : *store.snapshot()) {
    idempotent &= gv.version == after->at(vid).version && *gv.graph == *after->at(vid).graph;
  }
  c.expect(idempotent, "repeat run is idempotent");
}

Pipe sleepy(const std::string& name, std::chrono::milliseconds delay) {
  Pipe p;
  p.name = name;
  p.writes = {name};
  p.transform = [name, delay](DataWindow w) {
    std::this_thread::sleep_for(delay);
    return std::move(w).with_slot(make_slot(name, GenericPayload{name}, name));
  };
  return p;
}

void pipeline_parallelism(Check& c) {
  using namespace std::chrono_literals;
  const auto spec = sequential("three", {sleepy("a", 30ms), sleepy("b", 30ms), sleepy("c", 30ms)});
  std::vector<DataWindow> ws;
  for (std::uint32_t i = 0; i < 10; ++i) ws.push_back(testing::simple_window("v", i));
  const auto start = Clock::now();
  const auto result = run_pipeline(spec, from_vector(ws));
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 0.6, "runtime " + fmt(elapsed) + " s");
  bool ordered = result.windows.size() == 10;
  for (std::uint32_t i = 0; ordered && i < 10; ++i) {
    ordered = result.windows[i].window_index() == i && result.windows[i].has_slot("c");
  }
  c.expect(ordered, "output order");

  // two stub runs of the fixture bundle write identical KB bytes
  testing::TempDir dir;
  const auto bundle = load_bundle(fs::path(kData) / "bundles" / "kitchen");
  auto config = load_run_config(fs::path(kData) / "bundles" / "kitchen.config.json");
  config.stub_manifest = bundle.stub_manifest;
  const auto full = default_pipeline(stage_context(config, make_adapters(config)));
  ingest_bundle(bundle, config, full, dir.path() / "a.json");
  ingest_bundle(bundle, config, full, dir.path() / "b.json");
  c.expect(read_file(dir.path() / "a.json") == read_file(dir.path() / "b.json"), "byte-identical KBs");
}

void kb_round_trip(Check& c) {
  std::mt19937 rng(606);
  std::vector<VideoKnowledgeBase> fixtures{load_kb(fs::path(kData) / "bundles" / "kitchen.kb.json")};
  for (int i = 0; i < 50; ++i) fixtures.push_back(testing::random_document_kb(rng));
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const auto text = serialize_kb(fixtures[i]);
    const auto back = parse_kb(text);
    c.expect(back == fixtures[i] && serialize_kb(back) == text, "fixture " + std::to_string(i));
  }

  VideoKnowledgeBase base;
  do {
    base = testing::random_document_kb(rng);
  } while (base.windows.size() < 2 || base.windows[0].keyframes.empty());
  auto& f0 = base.windows[0].keyframes[0];
  f0.detections.push_back(Detection{f0.frame, "x", Box{0.1, 0.1, 0.2, 0.2}, 0.5});
  f0.tags.push_back(Tag{f0.frame, "y", 0.5});
  f0.captions.push_back(Caption{f0.frame, "c", std::nullopt, 0});
  struct Violation {
    std::string name;
    std::function<void(VideoKnowledgeBase&)> mutate;
    bool in_document = true;  // frame refs take their window from the document layout
  };
  const std::vector<Violation> violations{
      {"inverted box", [](auto& kb) { kb.windows[0].keyframes[0].detections.back().box = Box{0.6, 0.1, 0.4, 0.2}; }},
      {"box outside the frame",
       [](auto& kb) { kb.windows[0].keyframes[0].detections.back().box = Box{0.1, 0.1, 1.2, 0.2}; }},
      {"confidence above 1", [](auto& kb) { kb.windows[0].keyframes[0].tags.back().confidence = 1.5; }},
      {"negative confidence", [](auto& kb) { kb.windows[0].keyframes[0].detections.back().confidence = -0.1; }},
      {"empty tag label", [](auto& kb) { kb.windows[0].keyframes[0].tags.back().label.clear(); }},
      {"window gap", [](auto& kb) { kb.windows[1].index = 5; }},
      {"empty video id", [](auto& kb) { kb.video_id.clear(); }},
      {"schema version", [](auto& kb) { kb.version = 2; }},
      {"dangling triplet caption",
       [](auto& kb) {
         auto& f = kb.windows[0].keyframes[0];
         Triplet t;
         t.subject = "a";
         t.relation = "b";
         t.object = "c";
         t.frame = f.frame;
         t.caption_index = f.captions.size() + 3;
         f.triplets.push_back(t);
       }},
      {"frame from another window", [](auto& kb) { kb.windows[0].keyframes[0].frame.window_index = 1; }, false},
  };
  for (const auto& v : violations) {
    auto kb = base;
    v.mutate(kb);
    c.expect(error_code([&] { validate_kb(kb); }) != "no-error", v.name + " accepted by validate");
    if (!v.in_document) continue;
    const auto doc = nlohmann::json::parse(kb_to_json(kb).dump());
    c.expect(error_code([&] { kb_from_json(doc); }) != "no-error", v.name + " accepted on load");
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"graph construction equals the brute-force oracle", kg_oracle_equivalence},
      {"policeman and chef meet under person", worked_example},
      {"keyframe count and sharpest-frame choice", keyframe_math},
      {"k-means monotone inertia and small-set optimum", kmeans_properties},
      {"paragraph segmentation", segmentation},
      {"triplet concreteness filter", triplet_filter},
      {"retrieval on the planted corpus and against a full scan", retrieval},
      {"mini-classifier training and re-indexing", continual_learning},
      {"pipelined stages overlap and stay reproducible", pipeline_parallelism},
      {"KB round trip and invariant rejection", kb_round_trip},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    const auto start = Clock::now();
    try {
      run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    std::printf("%s  %s  (%s, %s s)\n", c.ok() ? "PASS" : "FAIL", name.c_str(), c.summary().c_str(),
                fmt(seconds_since(start)).c_str());
    failed += !c.ok();
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
