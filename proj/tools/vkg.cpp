#include <csignal>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "vkg/app.hpp"
#include "vkg/error.hpp"
#include "vkg/kg.hpp"
#include "vkg/service.hpp"
#include "vkg/text.hpp"

using namespace vkg;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::string store;
  std::string stub_manifest;
  std::string lexicon;
};

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.store.empty()) c.store = o.store;
  if (!o.stub_manifest.empty()) c.stub_manifest = fs::path(o.stub_manifest);
  if (!o.lexicon.empty()) c.lexicon = fs::path(o.lexicon);
  validate(c);
  return c;
}

PipelineSpec pipeline_for(const RunConfig& config) {
  auto ctx = stage_context(config, make_adapters(config));
  if (!config.pipeline) return default_pipeline(ctx);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(*config.pipeline));
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid-pipeline-spec", std::string("pipeline spec is not JSON: ") + e.what(), config.pipeline->string());
  }
  return pipeline_from_json(doc, ctx);
}

int run_ingest(const CommonOptions& o, const std::string& bundle_dir, const std::string& out) {
  const auto bundle = load_bundle(bundle_dir);
  auto config = resolve_config(o);
  if (!config.stub_manifest && config.adapters.empty()) config.stub_manifest = bundle.stub_manifest;
  const auto spec = pipeline_for(config);
  const fs::path kb_out = out.empty() ? store_kb_path(config.store, bundle.video_id) : fs::path(out);
  const auto result = ingest_bundle(bundle, config, spec, kb_out, store_frames_dir(config.store, bundle.video_id));
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : result.failures) {
    std::cerr << "dropped window " << f.window_index << " at " << f.pipe << ": " << f.code << ": " << f.message << "\n";
  }
  std::cout << "video " << bundle.video_id << ": windows " << result.kb.windows.size() << " (dropped "
            << result.failures.size() << "), keyframes " << result.keyframes << ", triplets " << result.triplets
            << "\n"
            << "kb " << kb_out.string() << "\n";
  return 0;
}

int run_build_kg(const CommonOptions& o, const std::string& kb_path) {
  const auto config = resolve_config(o);
  Workspace ws(config.store, load_lexicon(config));
  const auto kb = load_kb(kb_path);
  const auto version = ws.graphs().put(video_to_kg(kb, ws.lexicon()));
  const auto g = ws.graphs().latest(kb.video_id);
  std::cout << "video " << kb.video_id << ": graph v" << version << ", nodes " << g->graph->nodes.size() << ", edges "
            << g->graph->edges.size() << "\n";
  return 0;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int run_query(const CommonOptions& o, const std::string& text, std::size_t top_k) {
  const auto config = resolve_config(o);
  Workspace ws(config.store, load_lexicon(config));
  RetrieveOptions opts;
  opts.top_k = top_k;
  const auto q = query_to_graph(text, ws.lexicon());
  std::vector<std::string> skipped;
  const auto hits = retrieve(q, *ws.graphs().snapshot(), ws.lexicon(), opts, &skipped);
  for (const auto& s : skipped) std::cerr << "warning: skipped " << s << " (built from another lexicon)\n";
  std::cout << "query: " << join(q.direct(), " ") << "\n";
  if (hits.empty()) {
    std::cout << "no hits\n";
    return 0;
  }
  std::cout << "rank  video  version  score  specificity  matched  frames\n";
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const auto& h = hits[i];
    std::string frames;
    for (std::size_t k = 0; k < h.frames.size() && k < 5; ++k) {
      const auto& f = h.frames[k].frame;
      frames += (k ? " " : "") + std::string("w") + std::to_string(f.window_index) + "/f" +
                std::to_string(f.frame_index) + "@" + fixed(f.timestamp, 2) + "s";
    }
    if (h.frames.size() > 5) frames += " +" + std::to_string(h.frames.size() - 5);
    std::cout << i + 1 << "  " << h.video_id << "  v" << h.graph_version << "  " << fixed(h.score, 3) << "  "
              << h.specificity << "  " << join(h.matched, ",") << "  " << frames << "\n";
  }
  return 0;
}

httplib::Server* g_server = nullptr;

int run_serve(const CommonOptions& o, const std::string& host, int port) {
  const auto config = resolve_config(o);
  Service service(config, std::make_unique<Workspace>(config.store, load_lexicon(config)));
  httplib::Server server;
  service.mount(server);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "serving " << config.store.string() << " on " << host << ":" << port << std::endl;
  if (!server.listen(host, port)) throw Error("listen-failed", "cannot bind", host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video knowledge graph toolkit"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run config JSON")->check(CLI::ExistingFile);
    sub->add_option("--store", common.store, "Store root");
    sub->add_option("--stub-manifest", common.stub_manifest, "Serve adapters from a stub manifest")
        ->check(CLI::ExistingFile);
    sub->add_option("--lexicon", common.lexicon, "WordNet dict directory or fixture file");
  };

  std::string bundle, out, kb_path, text, host = "127.0.0.1";
  std::size_t top_k = 10;
  int port = 8080;

  auto* ingest = app.add_subcommand("ingest", "Run the pipeline over a fixture bundle and write its KB");
  add_common(ingest);
  ingest->add_option("bundle", bundle, "Bundle directory")->required();
  ingest->add_option("--out", out, "KB path (default <store>/kbs/<video>.json)");

  auto* build = app.add_subcommand("build-kg", "Build and store the knowledge graph of a KB");
  add_common(build);
  build->add_option("kb", kb_path, "KB file")->required()->check(CLI::ExistingFile);

  auto* query = app.add_subcommand("query", "Rank stored videos against a text query");
  add_common(query);
  query->add_option("text", text, "Query text")->required();
  query->add_option("--top-k", top_k, "Hits to list")->check(CLI::PositiveNumber);

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_common(serve);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return run_ingest(common, bundle, out);
    if (*build) return run_build_kg(common, kb_path);
    if (*query) return run_query(common, text, top_k);
    if (*serve) return run_serve(common, host, port);
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what();
    if (!e.context().empty()) std::cerr << " (" << e.context() << ")";
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
