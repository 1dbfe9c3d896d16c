#pragma once

// HTTP search service. Request handling is split from the socket layer so the
// contracts can be exercised without a network.

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "radsearch/retrieval/retrieval.hpp"

namespace httplib {
class Server;
}

namespace radsearch {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string checkpoint_path;
  std::string index_path;
  std::string image_root;   // image paths in the index are relative to this
  std::string static_root;  // UI bundle served at "/"; empty disables it
  std::size_t default_k = 3;
  std::size_t max_k = 20;
  int request_timeout_seconds = 10;

  // Throws ConfigError on max_k < 1, default_k outside [1, max_k] or a bad port.
  void validate() const;
};

// Immutable state a request runs against.
struct Snapshot {
  Retriever retriever;
  std::string image_root;
  std::string checkpoint_fingerprint;  // SHA-256 of the checkpoint bytes
};

// Loads checkpoint and index from disk and checks they belong together.
std::shared_ptr<const Snapshot> load_snapshot(const std::string& checkpoint_path, const std::string& index_path,
                                              const std::string& image_root);

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// {"error": {"code": ..., "message": ...}}
HttpReply error_reply(int status, const std::string& code, const std::string& message);

class SearchService {
 public:
  explicit SearchService(ServiceConfig config);

  // Atomic replacement; in-flight requests keep the snapshot they started with.
  void install(std::shared_ptr<const Snapshot> snapshot);
  std::shared_ptr<const Snapshot> snapshot() const;

  HttpReply handle_query(const std::string& body) const;
  // `head` omits the body but keeps the headers of the GET reply.
  HttpReply handle_image(const std::string& id, bool head = false) const;
  HttpReply handle_health() const;

  const ServiceConfig& config() const { return config_; }

  // Registers every route on `server`.
  void mount(httplib::Server& server) const;

 private:
  ServiceConfig config_;
  std::chrono::steady_clock::time_point started_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

// Serializes one ranked result the way /api/query does.
nlohmann::json result_json(const RankedResult& result, const EmbeddingIndex& index);

}  // namespace radsearch
