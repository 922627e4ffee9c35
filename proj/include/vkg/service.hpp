#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "json.hpp"

#include "vkg/app.hpp"
#include "vkg/continual.hpp"

namespace httplib {
class Server;
}

namespace vkg {

/// HTTP status for an error code: 404 for *-not-found and parent-unseen,
/// 409 for conflicts, 500 for internal, 400 otherwise.
int status_for(const std::string& code);

/// {"code", "message", "context"}
nlohmann::json error_body(const std::string& code, const std::string& message, const std::string& context = {});

/// Request handlers behind the HTTP routes:
///   GET  /videos
///   POST /query                          {q, top_k?, max_frames?}
///   GET  /frames/{video}/{frame}         ?raw=1 for the image bytes alone
///   GET  /virtual-synsets
///   POST /virtual-synsets                {parent, name}
///   GET  /virtual-synsets/{id}/candidates?limit=50
///   POST /virtual-synsets/{id}/labels    {labels: [{key, positive}]}
///   POST /virtual-synsets/{id}/train     {lambda?, threshold?}
///   GET  /jobs/{id}
class Service {
 public:
  Service(RunConfig config, std::unique_ptr<Workspace> workspace);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void mount(httplib::Server& server);

  nlohmann::json videos() const;
  nlohmann::json query(const nlohmann::json& body) const;
  nlohmann::json frame(const std::string& video_id, const std::string& frame) const;
  std::string frame_bytes(const std::string& video_id, const std::string& frame) const;
  nlohmann::json list_virtual() const;
  nlohmann::json create_virtual(const nlohmann::json& body);
  nlohmann::json candidates(const std::string& id, std::size_t limit) const;
  nlohmann::json label(const std::string& id, const nlohmann::json& body);
  nlohmann::json train(const std::string& id, const nlohmann::json& body);
  nlohmann::json job(const std::string& id) const;

  Workspace& workspace() { return *workspace_; }
  JobRunner& jobs() { return jobs_; }

 private:
  VirtualSynset virtual_or_throw(const std::string& id) const;

  RunConfig config_;
  std::unique_ptr<Workspace> workspace_;
  mutable std::mutex mutate_mu_;
  std::map<std::string, std::map<std::string, LabeledSample>> labels_;  // virtual -> key -> sample
  JobRunner jobs_;
};

nlohmann::json job_to_json(const JobRecord& job);

}  // namespace vkg
