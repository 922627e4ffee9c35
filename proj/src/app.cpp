#include "vkg/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <set>

#include "vkg/error.hpp"
#include "vkg/kg.hpp"
#include "vkg/text.hpp"

namespace vkg {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& message) {
  throw Error("config-error", message, key);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <class T>
T number_of(const json& doc, const std::string& key) {
  const auto& v = doc.at(key);
  if (!v.is_number()) config_error(key, key + " must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || v.get<long long>() < 0) config_error(key, key + " must be a non-negative integer");
  }
  return v.get<T>();
}

std::string string_of(const json& doc, const std::string& key) {
  const auto& v = doc.at(key);
  if (!v.is_string()) config_error(key, key + " must be a string");
  return v.get<std::string>();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---- run configuration -------------------------------------------------------

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) config_error("", "config must be a JSON object");
  static const std::set<std::string> known{
      "pipeline", "stub_manifest", "adapters", "adapter_timeout_ms", "theta", "tau", "alpha",
      "k_min", "k_max", "fps", "max_silent_duration", "queue_capacity", "include_ocr", "crop_pad",
      "lambda", "threshold", "store", "lexicon"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) config_error(key, "unknown config key " + key);
  }
  RunConfig c;
  if (doc.contains("pipeline")) c.pipeline = resolve(base_dir, string_of(doc, "pipeline"));
  if (doc.contains("stub_manifest")) c.stub_manifest = resolve(base_dir, string_of(doc, "stub_manifest"));
  if (doc.contains("adapters")) {
    const auto& a = doc["adapters"];
    if (!a.is_object()) config_error("adapters", "adapters must map task names to base URLs");
    for (const auto& [task, url] : a.items()) {
      try {
        task_kind_from(task);
      } catch (const Error&) {
        config_error("adapters." + task, "unknown adapter task " + task);
      }
      if (!url.is_string()) config_error("adapters." + task, "adapter URL must be a string");
      c.adapters[task] = url.get<std::string>();
    }
  }
  if (doc.contains("adapter_timeout_ms")) c.adapter_timeout_ms = number_of<int>(doc, "adapter_timeout_ms");
  if (doc.contains("theta")) c.theta = number_of<double>(doc, "theta");
  if (doc.contains("tau")) c.tau = number_of<double>(doc, "tau");
  if (doc.contains("alpha")) c.alpha = number_of<double>(doc, "alpha");
  if (doc.contains("k_min")) c.k_min = number_of<std::size_t>(doc, "k_min");
  if (doc.contains("k_max")) c.k_max = number_of<std::size_t>(doc, "k_max");
  if (doc.contains("fps")) c.fps = number_of<double>(doc, "fps");
  if (doc.contains("max_silent_duration")) c.max_silent_duration = number_of<double>(doc, "max_silent_duration");
  if (doc.contains("queue_capacity")) c.queue_capacity = number_of<std::size_t>(doc, "queue_capacity");
  if (doc.contains("include_ocr")) {
    if (!doc["include_ocr"].is_boolean()) config_error("include_ocr", "include_ocr must be a boolean");
    c.include_ocr = doc["include_ocr"].get<bool>();
  }
  if (doc.contains("crop_pad")) c.crop_pad = number_of<double>(doc, "crop_pad");
  if (doc.contains("lambda")) c.lambda = number_of<double>(doc, "lambda");
  if (doc.contains("threshold")) c.threshold = number_of<double>(doc, "threshold");
  if (doc.contains("store")) c.store = resolve(base_dir, string_of(doc, "store"));
  if (doc.contains("lexicon")) c.lexicon = resolve(base_dir, string_of(doc, "lexicon"));
  validate(c);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("config-error", std::string("config is not JSON: ") + e.what(), path.string());
  } catch (const Error& e) {
    throw Error("config-error", e.what(), path.string());
  }
  return run_config_from_json(doc, path.parent_path());
}

void validate(const RunConfig& c) {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in(c.theta, 0.0, 1.0)) config_error("theta", "theta must lie in [0, 1]");
  if (!in(c.tau, 1.0, 5.0)) config_error("tau", "tau must lie in [1, 5]");
  if (!in(c.alpha, 0.0, 1.0)) config_error("alpha", "alpha must lie in [0, 1]");
  if (c.k_min < 1 || c.k_max < c.k_min) config_error("k_min", "k range needs 1 <= k_min <= k_max");
  if (!(std::isfinite(c.fps) && c.fps > 0.0)) config_error("fps", "fps must be positive");
  if (!(std::isfinite(c.max_silent_duration) && c.max_silent_duration > 0.0)) {
    config_error("max_silent_duration", "max_silent_duration must be positive");
  }
  if (c.queue_capacity < 1) config_error("queue_capacity", "queue_capacity must be at least 1");
  if (c.adapter_timeout_ms <= 0) config_error("adapter_timeout_ms", "adapter_timeout_ms must be positive");
  if (!in(c.crop_pad, 0.0, 0.5)) config_error("crop_pad", "crop_pad must lie in [0, 0.5]");
  if (!(std::isfinite(c.lambda) && c.lambda >= 0.0)) config_error("lambda", "lambda must be non-negative");
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) config_error("threshold", "threshold must lie in (0, 1)");
  if (c.store.empty()) config_error("store", "store root is empty");
}

json fingerprint_config(const RunConfig& c) {
  return json{{"theta", c.theta},   {"tau", c.tau},           {"alpha", c.alpha},
              {"k_min", c.k_min},   {"k_max", c.k_max},       {"fps", c.fps},
              {"max_silent_duration", c.max_silent_duration}, {"include_ocr", c.include_ocr},
              {"crop_pad", c.crop_pad}};
}

AdapterSet make_adapters(const RunConfig& config) {
  if (config.stub_manifest) return stub_adapters(StubTransport::load(*config.stub_manifest));
  if (config.adapters.empty()) config_error("adapters", "neither adapter endpoints nor a stub manifest configured");
  auto http = std::make_shared<HttpTransport>();
  AdapterSet out;
  for (const auto& [task, url] : config.adapters) {
    AdapterEndpoint ep;
    ep.task = task_kind_from(task);
    ep.base_url = url;
    ep.timeout = std::chrono::milliseconds(config.adapter_timeout_ms);
    try {
      validate(ep);
    } catch (const Error& e) {
      config_error("adapters." + task, e.what());
    }
    out.emplace(ep.task, AdapterClient(ep, http));
  }
  return out;
}

// ---- declarative pipelines -----------------------------------------------------

StageContext stage_context(const RunConfig& config, AdapterSet adapters) {
  StageContext ctx;
  ctx.adapters = std::move(adapters);
  ctx.keyframes.alpha = config.alpha;
  ctx.keyframes.k_min = config.k_min;
  ctx.keyframes.k_max = config.k_max;
  ctx.prompt.include_ocr = config.include_ocr;
  ctx.focus.pad = config.crop_pad;
  ctx.relations.tau = config.tau;
  ctx.concreteness = std::shared_ptr<const ConcretenessLexicon>(&ConcretenessLexicon::shipped(),
                                                                [](const ConcretenessLexicon*) {});
  ctx.queue_capacity = config.queue_capacity;
  return ctx;
}

namespace {

[[noreturn]] void spec_error(const std::string& where, const std::string& message) {
  throw Error("invalid-pipeline-spec", message, where);
}

Pipe builtin_stage(const std::string& name, const StageContext& ctx) {
  auto client = [&](TaskKind task) {
    auto it = ctx.adapters.find(task);
    if (it == ctx.adapters.end()) spec_error(name, "stage " + name + " needs a " + to_string(task) + " adapter");
    return it->second;
  };
  if (name == "keyframes") return keyframe_pipe(ctx.keyframes);
  if (name == "tag") return tag_pipe(client(TaskKind::tag));
  if (name == "ocr") return ocr_pipe(client(TaskKind::ocr));
  if (name == "ground") return grounding_pipe(client(TaskKind::ground), ctx.prompt);
  if (name == "caption") return caption_pipe(client(TaskKind::caption), ctx.focus);
  if (name == "parse_triplets") return parse_triplets_pipe(client(TaskKind::parse_triplets));
  if (name == "coref") return coref_pipe(client(TaskKind::coref));
  if (name == "relations") {
    auto pipe = relation_pipe(*ctx.concreteness, ctx.relations);
    pipe.transform = [keep = ctx.concreteness, inner = pipe.transform](DataWindow w) { return inner(std::move(w)); };
    return pipe;
  }
  spec_error(name, "unknown stage " + name);
}

PipelineChild node_from_json(const json& node, const StageContext& ctx, const std::string& where);

std::vector<PipelineChild> children_of(const json& doc, const StageContext& ctx, const std::string& where) {
  if (!doc.contains("stages") || !doc["stages"].is_array() || doc["stages"].empty()) {
    spec_error(where, "stages must be a non-empty array");
  }
  std::vector<PipelineChild> out;
  for (std::size_t i = 0; i < doc["stages"].size(); ++i) {
    out.push_back(node_from_json(doc["stages"][i], ctx, where + ".stages[" + std::to_string(i) + "]"));
  }
  return out;
}

std::size_t capacity_of(const json& doc, const StageContext& ctx, const std::string& where) {
  if (!doc.contains("queue_capacity")) return ctx.queue_capacity;
  const auto& v = doc["queue_capacity"];
  if (!v.is_number_integer() || v.get<long long>() < 1) spec_error(where, "queue_capacity must be a positive integer");
  return v.get<std::size_t>();
}

PipelineChild node_from_json(const json& node, const StageContext& ctx, const std::string& where) {
  if (node.is_string()) return builtin_stage(node.get<std::string>(), ctx);
  if (!node.is_object()) spec_error(where, "a stage is a name or an object");
  if (node.contains("stage")) {
    if (!node["stage"].is_string()) spec_error(where, "stage must be a name");
    auto pipe = builtin_stage(node["stage"].get<std::string>(), ctx);
    if (node.contains("batch")) {
      const auto& b = node["batch"];
      if (!b.is_object() || !b.value("max_batch", json(1)).is_number_integer()) spec_error(where, "bad batch policy");
      BatchPolicy policy;
      policy.max_batch = b.value("max_batch", 1);
      policy.flush_timeout = std::chrono::milliseconds(b.value("flush_ms", 10));
      if (policy.max_batch < 1) spec_error(where, "max_batch must be at least 1");
      pipe.batch = policy;
    }
    return pipe;
  }
  for (const char* kind : {"sequential", "parallel", "loop"}) {
    if (!node.contains(kind)) continue;
    if (!node[kind].is_string()) spec_error(where, std::string(kind) + " needs a name");
    const auto name = node[kind].get<std::string>();
    auto children = children_of(node, ctx, where);
    PipelineSpec spec;
    if (std::string(kind) == "sequential") {
      spec = sequential(name, std::move(children));
    } else if (std::string(kind) == "parallel") {
      spec = parallel(name, std::move(children));
    } else {
      if (!node.contains("while_missing") || !node["while_missing"].is_string()) {
        spec_error(where, "loop needs a while_missing slot");
      }
      const int max_it = node.value("max_iterations", 1);
      const auto slot = node["while_missing"].get<std::string>();
      spec = loop(name, std::move(children), [slot](const DataWindow& w) { return !w.has_slot(slot); }, max_it);
    }
    spec.stage_queue_capacity = capacity_of(node, ctx, where);
    return spec;
  }
  spec_error(where, "unrecognized stage object");
}

}  // namespace

PipelineSpec pipeline_from_json(const json& doc, const StageContext& ctx) {
  if (!doc.is_object()) spec_error("pipeline", "pipeline spec must be an object");
  const auto name = doc.value("name", std::string("pipeline"));
  auto spec = sequential(name, children_of(doc, ctx, name));
  spec.stage_queue_capacity = capacity_of(doc, ctx, name);
  validate(spec);
  return spec;
}

PipelineSpec default_pipeline(const StageContext& ctx) {
  return pipeline_from_json(
      json{{"name", "ingest"},
           {"stages", {"keyframes", "tag", "ocr", "ground", "caption", "parse_triplets", "coref", "relations"}}},
      ctx);
}

// ---- fixture bundles -----------------------------------------------------------

FixtureBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("bundle-error", "bundle directory not found", dir.string());
  FixtureBundle b;
  b.dir = dir;
  b.video_id = fs::weakly_canonical(dir).filename().string();
  if (fs::exists(dir / "bundle.json")) {
    json meta;
    try {
      meta = json::parse(read_file(dir / "bundle.json"));
    } catch (const json::exception& e) {
      throw Error("bundle-error", std::string("bundle.json is not JSON: ") + e.what(), (dir / "bundle.json").string());
    }
    b.video_id = meta.value("video_id", b.video_id);
    b.fps = meta.value("fps", b.fps);
    b.created_at = meta.value("created_at", std::string());
  }
  check_video_id(b.video_id);
  if (!(b.fps > 0.0)) throw Error("bundle-error", "fps must be positive", b.video_id);
  const auto frames = dir / "frames";
  if (!fs::is_directory(frames)) throw Error("bundle-error", "bundle has no frames directory", dir.string());
  for (const auto& e : fs::directory_iterator(frames)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) b.frames.push_back(e.path());
  }
  std::sort(b.frames.begin(), b.frames.end());
  if (b.frames.empty()) throw Error("bundle-error", "bundle has no frames", frames.string());
  if (fs::exists(dir / "transcript.json")) b.transcript = parse_transcript(read_file(dir / "transcript.json"));
  if (fs::exists(dir / "stubs.json")) b.stub_manifest = dir / "stubs.json";
  return b;
}

IngestResult ingest_bundle(const FixtureBundle& bundle, const RunConfig& config, const PipelineSpec& spec,
                           const std::optional<fs::path>& kb_out, const std::optional<fs::path>& frames_out) {
  IngestResult result;
  auto warn = [&](const std::string& msg) { result.warnings.push_back(msg); };

  std::vector<Paragraph> paragraphs;
  if (bundle.transcript && !bundle.transcript->words.empty()) {
    SegmenterConfig seg;
    seg.coherency_threshold = config.theta;
    paragraphs = build_paragraphs(segment_sentences(bundle.transcript->words), seg);
  } else {
    warn("no transcript: every window is silent");
  }

  VideoHandle video;
  video.video_id = bundle.video_id;
  video.fps = bundle.fps;
  video.frame_count = bundle.frames.size();
  video.frame_image = [&bundle](std::uint64_t i) { return FrameImage(bundle.frames.at(i)); };
  auto windows = generate_windows(video, paragraphs, uniform_sampler(config.fps), config.max_silent_duration, warn);

  const auto created = bundle.created_at.empty() ? utc_now() : bundle.created_at;
  result.kb = ingest_to_kb(spec, from_vector(std::move(windows)), bundle.video_id,
                           fingerprint_of(spec, fingerprint_config(config)), created, kb_out, &result.failures);

  for (const auto& w : result.kb.windows) {
    for (const auto& f : w.keyframes) {
      ++result.keyframes;
      result.triplets += f.triplets.size();
      if (frames_out) {
        fs::create_directories(*frames_out);
        write_pnm(*frames_out / (std::to_string(f.frame.frame_index) + ".pnm"),
                  read_pnm(bundle.frames.at(f.frame.frame_index)));
      }
    }
  }
  return result;
}

// ---- workspace ----------------------------------------------------------------

namespace {

fs::path prepared(const fs::path& root) {
  fs::create_directories(root / "graphs");
  fs::create_directories(root / "kbs");
  fs::create_directories(root / "frames");
  return root;
}

}  // namespace

Workspace::Workspace(fs::path root, LexiconDb lexicon)
    : root_(prepared(root)),
      lexicon_(std::move(lexicon)),
      graphs_(root_ / "graphs"),
      classifiers_(root_ / "classifiers.txt") {
  lexicon_.attach_registry(root_ / "virtual_synsets.txt");
}

fs::path store_kb_path(const fs::path& root, const std::string& video_id) {
  check_video_id(video_id);
  return root / "kbs" / (video_id + ".json");
}

fs::path store_frames_dir(const fs::path& root, const std::string& video_id) {
  check_video_id(video_id);
  return root / "frames" / video_id;
}

fs::path Workspace::kb_path(const std::string& video_id) const { return store_kb_path(root_, video_id); }

fs::path Workspace::frames_dir(const std::string& video_id) const { return store_frames_dir(root_, video_id); }

ImageBuffer Workspace::load_frame(const FrameRef& frame) const {
  const auto path = frames_dir(frame.video_id) / (std::to_string(frame.frame_index) + ".pnm");
  if (!fs::exists(path)) {
    throw Error("frame-not-found", "no stored image for frame " + std::to_string(frame.frame_index), frame.video_id);
  }
  auto img = read_pnm(path);
  img.set_source(frame);
  return img;
}

std::uint64_t Workspace::build_graph(const fs::path& kb_file) {
  return graphs_.put(video_to_kg(load_kb(kb_file), lexicon_));
}

LexiconDb load_lexicon(const RunConfig& config) {
  if (config.lexicon) return LexiconDb::load(*config.lexicon);
  if (const char* env = std::getenv("VKG_WORDNET_DIR"); env != nullptr && *env != '\0') return LexiconDb::load(env);
  config_error("lexicon", "no lexicon configured and VKG_WORDNET_DIR is unset");
}

}  // namespace vkg
