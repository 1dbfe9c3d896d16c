#include "radsearch/service/service.hpp"

#include <charconv>
#include <filesystem>

#include <httplib.h>

#include "radsearch/binary_io.hpp"
#include "radsearch/errors.hpp"
#include "radsearch/evaluation/evaluation.hpp"

namespace radsearch {

using nlohmann::json;

void ServiceConfig::validate() const {
  if (max_k < 1) throw ConfigError("max_k must be at least 1");
  if (default_k < 1 || default_k > max_k) {
    throw ConfigError("default_k must be in [1, " + std::to_string(max_k) + "], got " + std::to_string(default_k));
  }
  if (port < 0 || port > 65535) throw ConfigError("port out of range: " + std::to_string(port));
  if (request_timeout_seconds < 1) throw ConfigError("request timeout must be at least 1 second");
}

std::shared_ptr<const Snapshot> load_snapshot(const std::string& checkpoint_path, const std::string& index_path,
                                              const std::string& image_root) {
  const auto bytes = bin::read_file(checkpoint_path);
  Model model = deserialize_checkpoint(bytes);
  const std::string file_hash = sha256_hex(bytes);
  return std::make_shared<const Snapshot>(Snapshot{Retriever(std::move(model), load_index(index_path)),
                                                   image_root, file_hash});
}

HttpReply error_reply(int status, const std::string& code, const std::string& message) {
  return {status, "application/json", json{{"error", {{"code", code}, {"message", message}}}}.dump()};
}

json result_json(const RankedResult& result, const EmbeddingIndex& index) {
  json items = json::array();
  for (std::size_t i = 0; i < result.items.size(); ++i) {
    const auto& it = result.items[i];
    const IndexMeta* meta = index.find(it.image_id);
    json record = json::object();
    if (meta != nullptr) {
      const auto& r = meta->record;
      record = {{"patient_id", r.patient_id},
                {"age", r.age},
                {"gender", gender_name(r.gender)},
                {"ethnicity", ethnicity_name(r.ethnicity)},
                {"stage", r.stage},
                {"region", region_name(r.region)}};
    }
    items.push_back({{"rank", i + 1},
                     {"id", it.image_id},
                     {"score", it.score},
                     {"image_url", "/api/image/" + std::to_string(it.image_id)},
                     {"record", record}});
  }
  return items;
}

SearchService::SearchService(ServiceConfig config)
    : config_(std::move(config)), started_(std::chrono::steady_clock::now()) {
  config_.validate();
}

void SearchService::install(std::shared_ptr<const Snapshot> snapshot) {
  std::lock_guard lock(mutex_);
  snapshot_ = std::move(snapshot);
}

std::shared_ptr<const Snapshot> SearchService::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

HttpReply SearchService::handle_query(const std::string& body) const {
  const auto t0 = std::chrono::steady_clock::now();
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_reply(400, "malformed_body", std::string("request body is not valid JSON: ") + e.what());
  }
  if (!req.is_object()) return error_reply(400, "malformed_body", "request body must be a JSON object");
  if (!req.contains("text") || !req["text"].is_string()) {
    return error_reply(400, "malformed_body", "field \"text\" must be a string");
  }
  const std::string text = req["text"].get<std::string>();
  if (text.size() > kMaxCaptionChars) {
    return error_reply(400, "text_too_long",
                       "text is " + std::to_string(text.size()) + " characters, limit " +
                           std::to_string(kMaxCaptionChars));
  }
  std::size_t k = config_.default_k;
  if (req.contains("k")) {
    const auto& jk = req["k"];
    if (!jk.is_number_integer()) return error_reply(400, "bad_k", "field \"k\" must be an integer");
    const auto v = jk.get<std::int64_t>();
    if (v < 1) return error_reply(400, "bad_k", "k must be at least 1, got " + std::to_string(v));
    k = std::min<std::uint64_t>(static_cast<std::uint64_t>(v), config_.max_k);
  }

  const auto snap = snapshot();
  if (!snap) return error_reply(503, "not_ready", "no index is loaded");

  ParsedQuery parsed;
  try {
    parsed = parse_query(text);
  } catch (const UnparseableQueryError& e) {
    return error_reply(422, e.code(), e.what());
  }
  const auto& index = snap->retriever.index();
  if (index.size() == 0) return error_reply(503, "not_ready", "the loaded index is empty");
  k = std::min(k, index.size());
  const RankedResult result = snap->retriever.query(text, k);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  json out = {{"query", text},
              {"k", k},
              {"tier", tier_name(parsed.tier)},
              {"results", result_json(result, index)},
              {"elapsed_ms", ms}};
  return {200, "application/json", out.dump()};
}

HttpReply SearchService::handle_image(const std::string& id_text, bool head) const {
  const auto snap = snapshot();
  if (!snap) return error_reply(503, "not_ready", "no index is loaded");
  std::uint64_t id = 0;
  const auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
  const IndexMeta* meta =
      (ec == std::errc() && ptr == id_text.data() + id_text.size()) ? snap->retriever.index().find(id) : nullptr;
  if (meta == nullptr) return error_reply(404, "unknown_image", "no image with id '" + id_text + "' in the index");
  const std::string path = (std::filesystem::path(snap->image_root) / meta->path).string();
  std::vector<std::uint8_t> bytes;
  try {
    bytes = bin::read_file(path);
  } catch (const Error& e) {
    return error_reply(404, "image_missing", e.what());
  }
  HttpReply reply{200, "image/png", {}};
  if (!head) reply.body.assign(bytes.begin(), bytes.end());
  return reply;
}

HttpReply SearchService::handle_health() const {
  const auto snap = snapshot();
  const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  json out = {{"status", snap ? "ok" : "not ready"},
              {"ready", static_cast<bool>(snap)},
              {"index_size", snap ? snap->retriever.index().size() : 0},
              {"checkpoint_fingerprint", snap ? snap->checkpoint_fingerprint : ""},
              {"uptime_seconds", uptime}};
  return {200, "application/json", out.dump()};
}

namespace {

void apply(const HttpReply& r, httplib::Response& res) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

void SearchService::mount(httplib::Server& server) const {
  server.set_read_timeout(config_.request_timeout_seconds, 0);
  server.set_write_timeout(config_.request_timeout_seconds, 0);
  server.Post("/api/query", [this](const httplib::Request& req, httplib::Response& res) {
    apply(handle_query(req.body), res);
  });
  server.Get(R"(/api/image/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    // HEAD is routed here too; httplib sends the headers and drops the body.
    apply(handle_image(req.matches[1].str()), res);
    if (res.status == 200) res.set_header("Cache-Control", "public, max-age=31536000, immutable");
  });
  server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) { apply(handle_health(), res); });
  if (!config_.static_root.empty()) server.set_mount_point("/", config_.static_root);
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const HttpReply r = error_reply(res.status, res.status == 404 ? "not_found" : "http_error",
                                    "no route for " + req.method + " " + req.path);
    res.set_content(r.body, r.content_type);
  });
}

}  // namespace radsearch
