#include "vkg/service.hpp"

#include <limits>

#include "httplib.h"

#include "vkg/error.hpp"
#include "vkg/hash.hpp"
#include "vkg/text.hpp"

namespace vkg {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

int status_for(const std::string& code) {
  if (code == "internal") return 500;
  if (code == "parent-unseen" || code == "not-found" || code.ends_with("-not-found")) return 404;
  if (code == "job-active" || code == "duplicate-name") return 409;
  return 400;
}

json error_body(const std::string& code, const std::string& message, const std::string& context) {
  return json{{"code", code}, {"message", message}, {"context", context}};
}

namespace {

[[noreturn]] void bad_request(const std::string& message, const std::string& context = {}) {
  throw Error("invalid-request", message, context);
}

std::uint64_t parse_index(const std::string& text, const std::string& what) {
  if (text.empty() || text.size() > 18 || text.find_first_not_of("0123456789") != std::string::npos) {
    bad_request(what + " must be a non-negative integer", text);
  }
  return std::stoull(text);
}

json box_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

json candidate_json(const Candidate& c) {
  return json{{"key", c.key},
              {"video_id", c.frame.video_id},
              {"window", c.frame.window_index},
              {"frame", c.frame.frame_index},
              {"t", c.frame.timestamp},
              {"box", box_json(c.box)}};
}

json virtual_json(const VirtualSynset& v) {
  return json{{"id", v.id},
              {"parent", v.parent},
              {"name", v.name},
              {"classifier_ref", v.classifier_ref},
              {"created_at", v.created_at}};
}

json progress_json(const ReindexProgress& p) {
  return json{{"graphs_total", p.graphs_total},
              {"graphs_done", p.graphs_done},
              {"crops_scored", p.crops_scored},
              {"crops_accepted", p.crops_accepted}};
}

}  // namespace

json job_to_json(const JobRecord& job) {
  return json{{"id", job.id},
              {"virtual_synset", job.virtual_synset},
              {"status", to_string(job.status)},
              {"progress", progress_json(job.progress)},
              {"from_versions", job.from_versions},
              {"to_versions", job.to_versions},
              {"failures", job.failures},
              {"classifier_id", job.classifier_id},
              {"error", job.error}};
}

Service::Service(RunConfig config, std::unique_ptr<Workspace> workspace)
    : config_(std::move(config)), workspace_(std::move(workspace)) {}

Service::~Service() = default;

VirtualSynset Service::virtual_or_throw(const std::string& id) const {
  auto v = workspace_->lexicon().virtual_synset(id);
  if (!v) throw Error("virtual-not-found", "unknown virtual synset", id);
  return *v;
}

json Service::videos() const {
  json list = json::array();
  const auto snap = workspace_->graphs().snapshot();
  for (const auto& [vid, gv] : *snap) {
    list.push_back(json{{"video_id", vid},
                        {"version", gv.version},
                        {"versions", workspace_->graphs().versions(vid)},
                        {"nodes", gv.graph->nodes.size()},
                        {"windows", gv.graph->windows.size()}});
  }
  return json{{"videos", list}};
}

json Service::query(const json& body) const {
  if (!body.is_object() || !body.contains("q") || !body["q"].is_string()) bad_request("body needs a string q");
  RetrieveOptions opts;
  if (body.contains("top_k")) {
    if (!body["top_k"].is_number_integer() || body["top_k"].get<long long>() < 1) bad_request("top_k must be >= 1");
    opts.top_k = body["top_k"].get<std::size_t>();
  }
  if (body.contains("max_frames")) {
    if (!body["max_frames"].is_number_integer() || body["max_frames"].get<long long>() < 0) {
      bad_request("max_frames must be >= 0");
    }
    opts.max_frames = body["max_frames"].get<std::size_t>();
  }
  const auto& lex = workspace_->lexicon();
  const auto q = query_to_graph(body["q"].get<std::string>(), lex);
  std::vector<std::string> skipped;
  const auto hits = retrieve(q, *workspace_->graphs().snapshot(), lex, opts, &skipped);
  json out{{"query", {{"q", body["q"]}, {"direct", q.direct()}}}, {"hits", json::array()}, {"skipped", skipped}};
  for (const auto& h : hits) out["hits"].push_back(json::parse(hit_to_json(h).dump()));
  return out;
}

json Service::frame(const std::string& video_id, const std::string& frame) const {
  check_video_id(video_id);
  const auto index = parse_index(frame, "frame");
  const auto latest = workspace_->graphs().latest(video_id);
  if (!latest) throw Error("video-not-found", "no graph for video", video_id);
  json overlays = json::array();
  std::optional<FrameRef> ref;
  for (const auto& [id, node] : latest->graph->nodes) {
    for (const auto& [key, info] : node.evidence) {
      if (key.frame != index) continue;
      ref = FrameRef{video_id, key.window, key.frame, info.timestamp};
      json kinds(info.kinds);
      if (info.boxes.empty()) {
        overlays.push_back(json{{"synset_id", id}, {"direct", node.direct}, {"kinds", kinds}, {"box", nullptr}});
      }
      for (const auto& b : info.boxes) {
        overlays.push_back(json{{"synset_id", id}, {"direct", node.direct}, {"kinds", kinds}, {"box", box_json(b)}});
      }
    }
  }
  if (!ref) throw Error("frame-not-found", "frame " + frame + " carries no evidence", video_id);
  const auto img = workspace_->load_frame(*ref);
  const auto bytes = encode_pnm(img);
  return json{{"video_id", video_id},
              {"window", ref->window_index},
              {"frame", index},
              {"t", ref->timestamp},
              {"width", img.width()},
              {"height", img.height()},
              {"channels", img.channels()},
              {"format", "pnm"},
              {"image_base64", base64_encode(bytes)},
              {"overlays", overlays}};
}

std::string Service::frame_bytes(const std::string& video_id, const std::string& frame) const {
  check_video_id(video_id);
  const auto bytes = encode_pnm(workspace_->load_frame(FrameRef{video_id, 0, parse_index(frame, "frame"), 0.0}));
  return std::string(bytes.begin(), bytes.end());
}

json Service::list_virtual() const {
  json out = json::array();
  for (const auto& v : workspace_->lexicon().virtual_synsets()) out.push_back(virtual_json(v));
  return json{{"virtual_synsets", out}};
}

json Service::create_virtual(const json& body) {
  if (!body.is_object() || !body.contains("parent") || !body["parent"].is_string() || !body.contains("name") ||
      !body["name"].is_string()) {
    bad_request("body needs string parent and name");
  }
  const auto name = trim(body["name"].get<std::string>());
  if (name.empty()) bad_request("name is empty");
  std::lock_guard lock(mutate_mu_);
  return virtual_json(workspace_->lexicon().register_virtual(body["parent"].get<std::string>(), name));
}

json Service::candidates(const std::string& id, std::size_t limit) const {
  const auto v = virtual_or_throw(id);
  const auto list = collect_candidates(v.parent, *workspace_->graphs().snapshot(), limit);
  std::map<std::string, LabeledSample> labeled;
  {
    std::lock_guard lock(mutate_mu_);
    if (auto it = labels_.find(id); it != labels_.end()) labeled = it->second;
  }
  json out = json::array();
  for (const auto& c : list) {
    auto j = candidate_json(c);
    auto it = labeled.find(c.key);
    j["label"] = it == labeled.end() ? json(nullptr) : json(it->second.positive);
    out.push_back(std::move(j));
  }
  return json{{"virtual_synset", id}, {"parent", v.parent}, {"candidates", out}};
}

json Service::label(const std::string& id, const json& body) {
  const auto v = virtual_or_throw(id);
  if (!body.is_object() || !body.contains("labels") || !body["labels"].is_array()) {
    bad_request("body needs a labels array");
  }
  std::map<std::string, Candidate> pool;
  for (auto& c : collect_candidates(v.parent, *workspace_->graphs().snapshot(),
                                    std::numeric_limits<std::size_t>::max())) {
    pool.emplace(c.key, c);
  }
  std::vector<std::pair<std::string, LabeledSample>> accepted;
  json rejected = json::array();
  for (const auto& item : body["labels"]) {
    if (!item.is_object() || !item.contains("key") || !item["key"].is_string() || !item.contains("positive") ||
        !item["positive"].is_boolean()) {
      bad_request("each label needs a string key and a boolean positive");
    }
    const auto key = item["key"].get<std::string>();
    auto it = pool.find(key);
    if (it == pool.end()) {
      rejected.push_back(json{{"key", key}, {"code", "unknown-candidate"}});
      continue;
    }
    try {
      const auto frame = workspace_->load_frame(it->second.frame);
      accepted.emplace_back(key, LabeledSample{candidate_features(frame, it->second.box, default_features),
                                               item["positive"].get<bool>(), it->second.frame, it->second.box});
    } catch (const Error& e) {
      rejected.push_back(json{{"key", key}, {"code", e.code()}});
    }
  }
  std::lock_guard lock(mutate_mu_);
  auto& store = labels_[id];
  for (auto& [key, sample] : accepted) store[key] = std::move(sample);
  std::size_t positives = 0;
  for (const auto& [_, s] : store) positives += s.positive;
  return json{{"accepted", accepted.size()},
              {"rejected", rejected},
              {"labeled", store.size()},
              {"positives", positives},
              {"negatives", store.size() - positives}};
}

json Service::train(const std::string& id, const json& body) {
  const auto v = virtual_or_throw(id);
  TrainConfig cfg;
  cfg.lambda = config_.lambda;
  cfg.threshold = config_.threshold;
  if (body.is_object()) {
    if (body.contains("lambda")) {
      if (!body["lambda"].is_number()) bad_request("lambda must be a number");
      cfg.lambda = body["lambda"].get<double>();
    }
    if (body.contains("threshold")) {
      if (!body["threshold"].is_number()) bad_request("threshold must be a number");
      cfg.threshold = body["threshold"].get<double>();
    }
  } else if (!body.is_null()) {
    bad_request("body must be an object");
  }
  std::lock_guard lock(mutate_mu_);
  std::vector<LabeledSample> samples;
  if (auto it = labels_.find(id); it != labels_.end()) {
    for (const auto& [_, s] : it->second) samples.push_back(s);
  }
  std::size_t positives = 0;
  for (const auto& s : samples) positives += s.positive;
  if (positives == 0 || positives == samples.size()) {
    throw Error("single-class-input", "label at least one positive and one negative candidate", id);
  }
  if (!(cfg.lambda >= 0.0) || !(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
    throw Error("invalid-config", "lambda >= 0 and threshold in (0,1) required", id);
  }
  auto* ws = workspace_.get();
  const auto job_id = jobs_.submit(id, [ws, id, cfg, samples](JobRecord& rec, const std::function<void()>& publish) {
    auto classifier = train_mini_classifier(samples, cfg);
    classifier.virtual_synset = id;
    rec.classifier_id = ws->classifiers().put(classifier);
    classifier.id = rec.classifier_id;
    ws->lexicon().set_virtual_classifier(id, rec.classifier_id);
    publish();
    const auto report = reindex(
        id, classifier, ws->graphs(), ws->lexicon(), [ws](const FrameRef& f) { return ws->load_frame(f); },
        default_features, [&](const ReindexProgress& p) {
          rec.progress = p;
          publish();
        });
    rec.progress = report.progress;
    rec.from_versions = report.from_versions;
    rec.to_versions = report.to_versions;
    rec.failures = report.failures;
  });
  return json{{"job_id", job_id}, {"virtual_synset", v.id}, {"samples", samples.size()}};
}

json Service::job(const std::string& id) const {
  const auto rec = jobs_.get(id);
  if (!rec) throw Error("not-found", "unknown job", id);
  return job_to_json(*rec);
}

void Service::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const std::function<json()>& f) {
    try {
      res.set_content(f().dump(), "application/json");
      res.status = 200;
    } catch (const Error& e) {
      res.status = status_for(e.code());
      res.set_content(error_body(e.code(), e.what(), e.context()).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body("internal", e.what()).dump(), "application/json");
    }
  };
  auto body_of = [](const httplib::Request& req) {
    if (req.body.empty()) return json();
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw Error("invalid-request", std::string("body is not JSON: ") + e.what());
    }
  };

  server.Get("/videos", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, [&] { return videos(); });
  });
  server.Post("/query", [this, reply, body_of](const httplib::Request& req, httplib::Response& res) {
    reply(res, [&] { return query(body_of(req)); });
  });
  server.Get(R"(/frames/([^/]+)/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    const std::string video = req.matches[1];
    const std::string frame_id = req.matches[2];
    if (req.get_param_value("raw") == "1") {
      try {
        res.set_content(frame_bytes(video, frame_id), "image/x-portable-anymap");
        res.status = 200;
        return;
      } catch (const Error&) {
      }
    }
    reply(res, [&] { return frame(video, frame_id); });
  });
  server.Get("/virtual-synsets", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, [&] { return list_virtual(); });
  });
  server.Post("/virtual-synsets", [this, reply, body_of](const httplib::Request& req, httplib::Response& res) {
    reply(res, [&] { return create_virtual(body_of(req)); });
  });
  server.Get(R"(/virtual-synsets/([^/]+)/candidates)",
             [this, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, [&] {
                 std::size_t limit = 50;
                 if (req.has_param("limit")) limit = parse_index(req.get_param_value("limit"), "limit");
                 return candidates(req.matches[1], limit);
               });
             });
  server.Post(R"(/virtual-synsets/([^/]+)/labels)",
              [this, reply, body_of](const httplib::Request& req, httplib::Response& res) {
                reply(res, [&] { return label(req.matches[1], body_of(req)); });
              });
  server.Post(R"(/virtual-synsets/([^/]+)/train)",
              [this, reply, body_of](const httplib::Request& req, httplib::Response& res) {
                reply(res, [&] { return train(req.matches[1], body_of(req)); });
              });
  server.Get(R"(/jobs/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, [&] { return job(req.matches[1]); });
  });
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(error_body(res.status == 404 ? "not-found" : "invalid-request", "no route", req.path).dump(),
                    "application/json");
  });
}

}  // namespace vkg
