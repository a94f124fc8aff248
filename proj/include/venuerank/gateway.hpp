#pragma once

// Command-line entry points and the HTTP recommendation service.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "venuerank/recmodel.hpp"

namespace venuerank {

/// Runs one CLI invocation (args excludes the program name). Returns 0 on
/// success, 1 on a usage error and 2 on a runtime error.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct RecommendRequest {
  std::string title;
  std::string abstract;
  std::vector<std::string> keywords;
  std::optional<std::size_t> k;  // default min(10, N)
};

/// Invalid request. `field` names the offending member.
class RequestError : public std::invalid_argument {
 public:
  RequestError(const std::string& what, std::string field)
      : std::invalid_argument(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

RecommendRequest parse_recommend_request(const nlohmann::json& body);

/// A loaded checkpoint plus its identity.
struct ModelSnapshot {
  std::shared_ptr<const TrainedModel> model;
  std::unique_ptr<Predictor> predictor;
  std::string model_id;  // FNV-1a of the checkpoint bytes
  std::filesystem::path path;
};

std::shared_ptr<const ModelSnapshot> load_snapshot(const std::filesystem::path& path);

inline constexpr std::size_t kDefaultTopK = 10;

/// Ranking for a request against a snapshot. Throws RequestError for
/// invalid requests and EmptyTextError when the features clean to nothing.
nlohmann::json recommend_json(const ModelSnapshot& snap, const RecommendRequest& req);

/// Request routing independent of the transport, so the handlers can be
/// exercised without sockets.
class RecommendService {
 public:
  explicit RecommendService(std::filesystem::path model_path);

  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  Response recommend(const std::string& body) const;
  Response venues() const;
  Response health() const;
  /// Reloads the checkpoint from disk; the old snapshot stays live on failure.
  Response reload();

  std::shared_ptr<const ModelSnapshot> snapshot() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::shared_ptr<const ModelSnapshot> snap_;
};

/// HTTP/1.1 front end: POST /recommend, GET /venues, GET /health,
/// POST /reload.
class HttpServer {
 public:
  explicit HttpServer(RecommendService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port), starts serving on a background
  /// thread and returns the bound port.
  int start(const std::string& host, int port);
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace venuerank
