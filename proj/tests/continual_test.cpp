#include <atomic>
#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "kb_builders.hpp"
#include "test_util.hpp"
#include "vkg/continual.hpp"
#include "vkg/error.hpp"
#include "vkg/text.hpp"

using namespace vkg;
using testing::kb_of;

namespace {

const std::string kData = VKG_TEST_DATA_DIR;

std::string error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "no-error";
}

/// Two Gaussian blobs around (+2, +2) and (-2, -2).
std::vector<LabeledSample> blobs(std::mt19937& rng, int n, double spread = 0.5) {
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<LabeledSample> out;
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    const double c = pos ? 2.0 : -2.0;
    out.push_back(LabeledSample{{c + noise(rng), c + noise(rng)}, pos, {}, {}});
  }
  return out;
}

double accuracy(const MiniClassifier& c, const std::vector<LabeledSample>& xs) {
  int ok = 0;
  for (const auto& s : xs) ok += apply_classifier(c, s.features).accept == s.positive;
  return static_cast<double>(ok) / static_cast<double>(xs.size());
}

/// Frames with an even index are bright, the rest dark.
ImageBuffer shade_of(const FrameRef& f) {
  return ImageBuffer::filled(16, 16, 1, f.frame_index % 2 == 0 ? 220 : 30, f);
}

std::vector<double> mean_brightness(const ImageBuffer& crop, const Box&) {
  double s = 0.0;
  for (auto p : crop.pixels()) s += p;
  return {s / static_cast<double>(crop.pixels().size())};
}

MiniClassifier planted(double bias) {
  MiniClassifier c;
  c.id = "planted";
  c.weights = {1.0};
  c.bias = bias;
  return c;
}

}  // namespace

TEST_CASE("collect_candidates walks parent evidence") {
  auto lex = LexiconDb::load(kData + "/kg_fixture.txt");
  GraphStore store;
  // dog in frames 3, 6 of a; 3, 9, 12 of b; plus a detection box in b
  store.put(video_to_kg(kb_of("a", {{{"dog"}, {"dog", "cat"}}}), lex));
  auto gb = video_to_kg(kb_of("b", {{{"dog"}, {"cat"}}, {{"dog"}, {"dog"}}}), lex);
  gb.nodes.at("dog.n.01").evidence.at(FrameKey{0, 3}).boxes.insert(Box{0.1, 0.2, 0.3, 0.4});
  store.put(gb);
  store.put(video_to_kg(kb_of("c", {{{"ship"}}}), lex));

  const auto all = collect_candidates("dog.n.01", *store.snapshot(), 50);
  REQUIRE(all.size() == 5);
  CHECK(all[0].frame == FrameRef{"a", 0, 3, 0.5});
  CHECK(all[0].box == Box::whole());
  CHECK(all[0].key == candidate_key(all[0].frame, all[0].box));
  CHECK(all[2].frame == FrameRef{"b", 0, 3, 0.5});
  CHECK(all[2].box == Box{0.1, 0.2, 0.3, 0.4});
  std::set<std::string> keys;
  for (const auto& c : all) keys.insert(c.key);
  CHECK(keys.size() == all.size());
  for (std::size_t i = 1; i < all.size(); ++i) {
    CHECK(std::tie(all[i - 1].frame.video_id, all[i - 1].frame.frame_index, all[i - 1].box) <
          std::tie(all[i].frame.video_id, all[i].frame.frame_index, all[i].box));
  }

  const auto three = collect_candidates("dog.n.01", *store.snapshot(), 3);
  CHECK(three == std::vector<Candidate>(all.begin(), all.begin() + 3));
  CHECK(collect_candidates("dog.n.01", *store.snapshot(), 0).empty());
  // the ancestor joins only where dog and cat share a frame (a, frames 3 and 6)
  CHECK(collect_candidates("animal.n.01", *store.snapshot(), 50).size() == 2);
  CHECK(error_code([&] { collect_candidates("knife.n.01", *store.snapshot(), 50); }) == "parent-unseen");
}

TEST_CASE("default_features layout") {
  auto img = ImageBuffer::filled(20, 10, 1, 100);
  const auto f = default_features(img, Box{0.0, 0.0, 0.5, 0.25});
  REQUIRE(f.size() == kDefaultFeatureDim);
  double hist = 0.0;
  for (int i = 0; i < 256; ++i) hist += f[i];
  CHECK(hist == doctest::Approx(1.0));
  CHECK(f[100] == doctest::Approx(1.0));
  CHECK(f[256] == 0.0);  // flat image
  CHECK(f[257] == 0.5);
  CHECK(f[258] == 0.25);
  CHECK(f[259] == doctest::Approx(std::log(2.0)));
  CHECK(default_features(ImageBuffer::filled(2, 2, 1, 9), Box::whole())[256] == 0.0);

  const auto frame = ImageBuffer::filled(32, 32, 1, 50);
  CHECK(candidate_features(frame, Box{0.5, 0.5, 0.5, 0.5}, default_features).size() == kDefaultFeatureDim);
  CHECK(mean_brightness(ImageBuffer::filled(4, 4, 1, 7), Box::whole())[0] == 7.0);
}

TEST_CASE("logistic gradient matches finite differences") {
  std::mt19937 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
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
    for (std::size_t j = 0; j < d; ++j) {
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      const double fd = (logistic_loss(wp, b, xs, ys, lambda) - logistic_loss(wm, b, xs, ys, lambda)) / (2 * h);
      CHECK(rel(gw[j], fd) < 1e-5);
    }
    const double fdb = (logistic_loss(w, b + h, xs, ys, lambda) - logistic_loss(w, b - h, xs, ys, lambda)) / (2 * h);
    CHECK(rel(gb, fdb) < 1e-5);
  }
}

TEST_CASE("training separates blobs") {
  std::mt19937 rng(5);
  const auto train = blobs(rng, 50);
  const auto c = train_mini_classifier(train);
  CHECK(c.dim() == 2);
  CHECK(c.meta.positives == 25);
  CHECK(c.meta.negatives == 25);
  CHECK(accuracy(c, train) >= 0.98);
  CHECK(accuracy(c, blobs(rng, 200)) >= 0.98);
  REQUIRE(c.meta.loss_trace.size() >= 2);
  CHECK(c.meta.loss_trace.front() == doctest::Approx(std::log(2.0)));
  for (std::size_t i = 1; i < c.meta.loss_trace.size(); ++i) {
    CHECK(c.meta.loss_trace[i] <= c.meta.loss_trace[i - 1]);
  }
  CHECK(c.meta.final_loss == c.meta.loss_trace.back());
  CHECK((c.meta.grad_norm < 1e-6 || c.meta.epochs == 5000));

  // the plain gradient direction reaches the same separation
  TrainConfig gd;
  gd.newton = false;
  const auto plain = train_mini_classifier(train, gd);
  CHECK(accuracy(plain, train) >= 0.98);
  for (std::size_t i = 1; i < plain.meta.loss_trace.size(); ++i) {
    CHECK(plain.meta.loss_trace[i] <= plain.meta.loss_trace[i - 1]);
  }
  CHECK(plain.meta.final_loss >= c.meta.final_loss - 1e-9);

  // a far positive point is confidently accepted
  const auto far = apply_classifier(c, {8.0, 8.0});
  CHECK(far.accept);
  CHECK(far.probability > 0.99);
  CHECK(apply_classifier(c, {-8.0, -8.0}).probability < 0.01);

  // training is deterministic
  const auto again = train_mini_classifier(train);
  CHECK(again.weights == c.weights);
  CHECK(again.bias == c.bias);
}

TEST_CASE("training input errors") {
  std::vector<LabeledSample> one{{{1.0}, true, {}, {}}, {{2.0}, true, {}, {}}};
  CHECK(error_code([&] { train_mini_classifier(one); }) == "single-class-input");
  CHECK(error_code([&] { train_mini_classifier({}); }) == "single-class-input");
  std::vector<LabeledSample> ragged{{{1.0}, true, {}, {}}, {{2.0, 3.0}, false, {}, {}}};
  CHECK(error_code([&] { train_mini_classifier(ragged); }) == "dimension-mismatch");
  std::vector<LabeledSample> ok{{{1.0}, true, {}, {}}, {{-1.0}, false, {}, {}}};
  TrainConfig bad;
  bad.threshold = 1.0;
  CHECK(error_code([&] { train_mini_classifier(ok, bad); }) == "invalid-config");
  bad = {};
  bad.lambda = -1;
  CHECK(error_code([&] { train_mini_classifier(ok, bad); }) == "invalid-config");
  const auto c = train_mini_classifier(ok);
  CHECK(error_code([&] { apply_classifier(c, {1.0, 2.0}); }) == "dimension-mismatch");
}

TEST_CASE("heavy regularization falls back to the base rate") {
  std::mt19937 rng(3);
  auto xs = blobs(rng, 40);
  for (int i = 0; i < 10; ++i) xs[2 * i].positive = false;  // 10 positives of 40
  TrainConfig cfg;
  cfg.lambda = 1e6;
  const auto c = train_mini_classifier(xs, cfg);
  for (double w : c.weights) CHECK(std::abs(w) < 1e-5);
  const double p = apply_classifier(c, {0.3, -0.7}).probability;
  CHECK(p == doctest::Approx(10.0 / 40.0).epsilon(1e-4));
}

TEST_CASE("decision boundary") {
  MiniClassifier c;
  c.weights = {0.0, 0.0};
  c.bias = 0.0;
  const auto d = apply_classifier(c, {5.0, -3.0});
  CHECK(d.probability == 0.5);
  CHECK(d.accept);  // p >= threshold
  c.weights = {1.0, 1.0};
  c.bias = -2.0;
  CHECK(apply_classifier(c, {1.0, 1.0}).accept);
  CHECK_FALSE(apply_classifier(c, {1.0, 0.999}).accept);
}

TEST_CASE("predictions are invariant to affine feature scaling") {
  std::mt19937 rng(9);
  auto xs = blobs(rng, 50, 1.5);
  auto scaled = xs;
  for (auto& s : scaled) {
    for (auto& v : s.features) v = 4.0 * v + 3.0;
  }
  const auto a = train_mini_classifier(xs);
  const auto b = train_mini_classifier(scaled);
  for (const auto& s : blobs(rng, 100, 1.5)) {
    std::vector<double> t = s.features;
    for (auto& v : t) v = 4.0 * v + 3.0;
    const auto pa = apply_classifier(a, s.features).probability;
    const auto pb = apply_classifier(b, t).probability;
    CHECK(pa == doctest::Approx(pb).epsilon(1e-6));
  }
}

TEST_CASE("classifier registry round trip") {
  testing::TempDir dir;
  const auto path = dir.path() / "classifiers.txt";
  std::mt19937 rng(2);
  auto c = train_mini_classifier(blobs(rng, 20));
  c.virtual_synset = "ship.n.00.v1";
  c.bias = 0.1;  // not exactly representable in short decimal
  std::string id1, id2;
  {
    ClassifierRegistry reg(path);
    id1 = reg.put(c);
    id2 = reg.put(c);
  }
  CHECK(id1 == "ship.n.00.v1@1");
  CHECK(id2 == "ship.n.00.v1@2");
  ClassifierRegistry reg(path);
  CHECK(reg.size() == 2);
  const auto back = reg.get(id1);
  REQUIRE(back);
  CHECK(back->weights == c.weights);
  CHECK(back->bias == c.bias);
  CHECK(back->threshold == c.threshold);
  CHECK(back->standardization == c.standardization);
  CHECK(reg.latest_for("ship.n.00.v1")->id == id2);
  CHECK_FALSE(reg.latest_for("dog.n.00.v1"));
  CHECK(ClassifierRegistry::format_line(*back) == ClassifierRegistry::format_line(*reg.get(id1)));

  CHECK(error_code([] { ClassifierRegistry::parse_line("a|b|c"); }) == "registry-parse-error");
  CHECK(error_code([] { ClassifierRegistry::parse_line("a|b|2|AAAAAAAAAAA=|0|0.5|,"); }) == "registry-parse-error");
  write_file_atomic(dir.path() / "bad.txt", "x|y|z\n");
  CHECK(error_code([&] { ClassifierRegistry r(dir.path() / "bad.txt"); }) == "registry-parse-error");
}

TEST_CASE("reindex attaches accepted crops") {
  auto lex = LexiconDb::load(kData + "/kg_fixture.txt");
  const auto v = lex.register_virtual("dog.n.01", "spotted dog", "", "t0");
  GraphStore store;
  // dog in frames 3 (dark), 6 (bright) of a and 3 (dark), 12 (bright) of b
  store.put(video_to_kg(kb_of("a", {{{"dog"}, {"dog", "cat"}}}), lex));
  store.put(video_to_kg(kb_of("b", {{{"dog"}, {"cat"}}, {{"ship"}, {"dog"}}}), lex));
  store.put(video_to_kg(kb_of("c", {{{"ship"}}}), lex));

  std::vector<ReindexProgress> seen;
  const auto report = reindex(v.id, planted(-128.0), store, lex, shade_of, mean_brightness,
                              [&](const ReindexProgress& p) { seen.push_back(p); });
  CHECK(report.failures.empty());
  CHECK(report.from_versions == std::map<std::string, std::uint64_t>{{"a", 1}, {"b", 1}});
  CHECK(report.to_versions == std::map<std::string, std::uint64_t>{{"a", 2}, {"b", 2}});
  CHECK(report.progress.graphs_total == 2);
  CHECK(report.progress.crops_scored == 4);
  CHECK(report.progress.crops_accepted == 2);
  REQUIRE(seen.size() == 2);
  CHECK(seen.back().graphs_done == 2);

  const auto a = store.latest("a")->graph;
  const auto* node = a->find(v.id);
  REQUIRE(node);
  REQUIRE(node->evidence.size() == 1);
  CHECK(node->evidence.begin()->first == FrameKey{0, 6});
  CHECK(node->evidence.begin()->second.kinds == std::set<std::string>{"classifier"});
  CHECK(node->evidence.begin()->second.boxes == std::set<Box>{Box::whole()});
  CHECK(a->edges.count({v.id, "dog.n.01"}));
  CHECK(store.latest("b")->graph->find(v.id)->evidence.begin()->first == FrameKey{1, 12});
  CHECK(store.latest("c")->version == 1);
  for (const std::string vid : {"a", "b"}) {
    const auto old = store.get(vid, 1)->graph;
    const auto now = store.latest(vid)->graph;
    for (const auto& [id, n] : old->nodes) {
      REQUIRE(now->find(id));
      CHECK(evidence_contains(now->find(id)->evidence, n.evidence));
    }
    for (const auto& e : old->edges) CHECK(now->edges.count(e));
  }

  // rerun changes nothing
  const auto again = reindex(v.id, planted(-128.0), store, lex, shade_of, mean_brightness);
  CHECK(again.from_versions == report.to_versions);
  CHECK(again.to_versions == report.to_versions);
  CHECK(store.versions("a") == std::vector<std::uint64_t>{1, 2});

  // the query now finds only the accepted frames
  const auto hits = retrieve("spotted dog", store, lex);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].frames.size() == 1);
}

TEST_CASE("reindex with a reject-all classifier leaves graphs alone") {
  auto lex = LexiconDb::load(kData + "/kg_fixture.txt");
  const auto v = lex.register_virtual("dog.n.01", "spotted dog", "", "t0");
  GraphStore store;
  store.put(video_to_kg(kb_of("a", {{{"dog"}, {"dog"}}}), lex));
  const auto before = store.latest("a")->graph;
  const auto report = reindex(v.id, planted(-1000.0), store, lex, shade_of, mean_brightness);
  CHECK(report.to_versions == report.from_versions);
  CHECK(report.progress.crops_accepted == 0);
  CHECK(*store.latest("a")->graph == *before);

  // a failing loader is recorded per graph
  store.put(video_to_kg(kb_of("b", {{{"dog"}}}), lex));
  const auto failing = reindex(
      v.id, planted(0.0), store, lex,
      [](const FrameRef& f) -> ImageBuffer {
        if (f.video_id == "a") throw Error("frame-not-found", "gone");
        return shade_of(f);
      },
      mean_brightness);
  CHECK(failing.failures.count("a"));
  CHECK(failing.to_versions.at("b") == 2);
  CHECK(error_code([&] { reindex("nope.n.00.v9", planted(0), store, lex, shade_of, mean_brightness); }) ==
        "virtual-not-found");
}

TEST_CASE("job runner") {
  JobRunner runner;
  std::atomic<bool> release{false};
  const auto id = runner.submit("x.n.00.v1", [&](JobRecord& rec, const std::function<void()>& publish) {
    rec.progress.graphs_total = 3;
    publish();
    while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    rec.classifier_id = "x.n.00.v1@1";
  });
  CHECK(id == "job-000001");
  CHECK(error_code([&] { runner.submit("x.n.00.v1", [](JobRecord&, const std::function<void()>&) {}); }) ==
        "job-active");
  const auto other = runner.submit("y.n.00.v1", [](JobRecord&, const std::function<void()>&) {
    throw Error("boom", "failed on purpose");
  });
  release = true;
  const auto done = runner.wait(id);
  CHECK(done.status == JobStatus::done);
  CHECK(done.classifier_id == "x.n.00.v1@1");
  CHECK(done.progress.graphs_total == 3);
  const auto bad = runner.wait(other);
  CHECK(bad.status == JobStatus::failed);
  CHECK(bad.error == "failed on purpose");
  CHECK_FALSE(runner.get("job-999999"));
  CHECK(to_string(JobStatus::running) == "running");
  // a finished synset accepts a new job
  const auto next = runner.submit("x.n.00.v1", [](JobRecord&, const std::function<void()>&) {});
  CHECK(runner.wait(next).status == JobStatus::done);
}
