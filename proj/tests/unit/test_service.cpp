#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "radsearch/augment/augment.hpp"
#include "radsearch/binary_io.hpp"
#include "radsearch/service/service.hpp"
#include "support.hpp"

namespace radsearch {
namespace {

using nlohmann::json;

class ServiceFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::ScratchDir("service");
    CorpusConfig c;
    c.n_patients = 10;
    c.min_images_per_patient = 2;
    c.max_images_per_patient = 3;
    c.seed = 51;
    const auto corpus = generate_corpus(c, SynonymLexicon::builtin());
    write_corpus(data_dir(), corpus);
    std::vector<std::string> captions;
    for (const auto& e : corpus.manifest.entries) captions.insert(captions.end(), e.captions.begin(), e.captions.end());
    const Model model(testing::small_corpus_model_config(), Vocabulary::build(captions), 5);
    save_checkpoint(checkpoint(), model);
    std::vector<const ImageEntry*> entries;
    for (const auto& e : corpus.manifest.entries) entries.push_back(&e);
    const auto loader = [](const ImageEntry& e) { return read_png(data_dir() + "/" + e.path); };
    save_index(index_path(), build_index(model, entries, loader));

    // A second checkpoint and index for swap tests.
    const Model other(model.config(), model.vocab(), 6);
    save_checkpoint(dir_->file("other.ckpt"), other);
    save_index(dir_->file("other.emb"), build_index(other, entries, loader));

    std::filesystem::create_directories(dir_->path() / "ui");
    std::ofstream(dir_->file("ui/index.html")) << "<!doctype html><title>search</title>\n";
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static std::string data_dir() { return dir_->file("data"); }
  static std::string checkpoint() { return dir_->file("model.ckpt"); }
  static std::string index_path() { return dir_->file("index.emb"); }

  static ServiceConfig config() {
    ServiceConfig c;
    c.checkpoint_path = checkpoint();
    c.index_path = index_path();
    c.image_root = data_dir();
    c.static_root = dir_->file("ui");
    return c;
  }

  static std::shared_ptr<const Snapshot> snapshot() { return load_snapshot(checkpoint(), index_path(), data_dir()); }

  static json body(const HttpReply& r) { return json::parse(r.body); }
  static std::string error_code(const HttpReply& r) { return body(r)["error"]["code"].get<std::string>(); }

  static testing::ScratchDir* dir_;
};
testing::ScratchDir* ServiceFixture::dir_ = nullptr;

TEST_F(ServiceFixture, QueryMatchesLibrary) {
  SearchService service(config());
  const auto snap = snapshot();
  service.install(snap);
  const auto r = service.handle_query(R"({"text": "An image with Periodontal Stage Two.", "k": 3})");
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = body(r);
  EXPECT_EQ(j["tier"], "Low");
  EXPECT_EQ(j["k"], 3);
  ASSERT_EQ(j["results"].size(), 3u);
  const auto lib = snap->retriever.query("An image with Periodontal Stage Two.", 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& item = j["results"][i];
    EXPECT_EQ(item["rank"], i + 1);
    EXPECT_EQ(item["id"].get<std::uint64_t>(), lib.items[i].image_id);
    EXPECT_EQ(item["score"].get<double>(), lib.items[i].score);
    EXPECT_EQ(item["image_url"], "/api/image/" + std::to_string(lib.items[i].image_id));
    const auto* meta = snap->retriever.index().find(lib.items[i].image_id);
    EXPECT_EQ(item["record"]["stage"], meta->record.stage);
    EXPECT_EQ(item["record"]["region"], region_name(meta->record.region));
  }
  EXPECT_GE(j["elapsed_ms"].get<double>(), 0.0);
}

TEST_F(ServiceFixture, KDefaultsAndClamps) {
  auto cfg = config();
  cfg.max_k = 5;
  SearchService service(cfg);
  service.install(snapshot());
  EXPECT_EQ(body(service.handle_query(R"({"text": "stage one"})"))["results"].size(), 3u);
  EXPECT_EQ(body(service.handle_query(R"({"text": "stage one", "k": 50})"))["results"].size(), 5u);
  cfg.max_k = 1000;
  SearchService wide(cfg);
  wide.install(snapshot());
  const auto all = body(wide.handle_query(R"({"text": "stage one", "k": 1000})"));
  EXPECT_EQ(all["results"].size(), snapshot()->retriever.index().size());
  double prev = 2.0;
  for (const auto& item : all["results"]) {
    EXPECT_LE(item["score"].get<double>(), prev);
    prev = item["score"].get<double>();
  }
}

TEST_F(ServiceFixture, ErrorContracts) {
  SearchService service(config());
  const std::string ok = R"({"text": "stage two", "k": 3})";
  auto r = service.handle_query(ok);
  EXPECT_EQ(r.status, 503);
  EXPECT_EQ(error_code(r), "not_ready");
  EXPECT_EQ(service.handle_image("1").status, 503);

  service.install(snapshot());
  EXPECT_EQ(service.handle_query(ok).status, 200);
  for (const char* bad : {"not json", "[1, 2]", R"({"k": 3})", R"({"text": 5})", R"({"text": "stage two", "k": 0})",
                          R"({"text": "stage two", "k": -4})", R"({"text": "stage two", "k": "3"})",
                          R"({"text": "stage two", "k": 2.5})"}) {
    r = service.handle_query(bad);
    EXPECT_EQ(r.status, 400) << bad;
    EXPECT_FALSE(error_code(r).empty());
  }
  r = service.handle_query(json{{"text", "stage two " + std::string(200, 'x')}}.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(error_code(r), "text_too_long");
  for (const char* unparseable : {R"({"text": "", "k": 3})", R"({"text": "a molar", "k": 3})"}) {
    r = service.handle_query(unparseable);
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(error_code(r), "unparseable_query");
  }
  r = service.handle_image("999999999");
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(error_code(r), "unknown_image");
  EXPECT_EQ(service.handle_image("abc").status, 404);
  EXPECT_EQ(service.handle_image("12x").status, 404);
}

TEST_F(ServiceFixture, ImagesAreServedVerbatim) {
  SearchService service(config());
  const auto snap = snapshot();
  service.install(snap);
  for (const auto& meta : snap->retriever.index().meta) {
    const auto r = service.handle_image(std::to_string(meta.image_id));
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.content_type, "image/png");
    const auto disk = bin::read_file(data_dir() + "/" + meta.path);
    EXPECT_EQ(r.body, std::string(disk.begin(), disk.end()));
    const auto head = service.handle_image(std::to_string(meta.image_id), true);
    EXPECT_EQ(head.status, 200);
    EXPECT_TRUE(head.body.empty());
  }
}

TEST_F(ServiceFixture, HealthBeforeAndAfterLoad) {
  SearchService service(config());
  auto h = body(service.handle_health());
  EXPECT_EQ(h["ready"], false);
  EXPECT_EQ(h["index_size"], 0);
  service.install(snapshot());
  h = body(service.handle_health());
  EXPECT_EQ(h["ready"], true);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["index_size"], snapshot()->retriever.index().size());
  EXPECT_EQ(h["checkpoint_fingerprint"], sha256_hex(bin::read_file(checkpoint())));
  EXPECT_GE(h["uptime_seconds"].get<double>(), 0.0);
}

TEST_F(ServiceFixture, MismatchedCheckpointAndIndexRefuseToLoad) {
  EXPECT_THROW(load_snapshot(dir_->file("other.ckpt"), index_path(), data_dir()), FingerprintError);
  EXPECT_THROW(load_snapshot(dir_->file("missing.ckpt"), index_path(), data_dir()), IoError);
}

TEST_F(ServiceFixture, ConfigValidation) {
  auto c = config();
  c.max_k = 0;
  EXPECT_THROW(SearchService{c}, ConfigError);
  c = config();
  c.default_k = 21;
  EXPECT_THROW(SearchService{c}, ConfigError);
  c = config();
  c.port = 70000;
  EXPECT_THROW(SearchService{c}, ConfigError);
}

TEST_F(ServiceFixture, SnapshotSwapIsAtomicUnderLoad) {
  SearchService service(config());
  const auto a = snapshot();
  const auto b = load_snapshot(dir_->file("other.ckpt"), dir_->file("other.emb"), data_dir());
  const std::string text = "An image with Periodontal Stage Three in the Maxilla region.";
  const auto ids = [](const RankedResult& r) {
    std::vector<std::uint64_t> out;
    for (const auto& it : r.items) out.push_back(it.image_id);
    return out;
  };
  const auto expect_a = ids(a->retriever.query(text, 5));
  const auto expect_b = ids(b->retriever.query(text, 5));
  service.install(a);
  std::atomic<bool> stop{false};
  std::atomic<int> bad{0}, done{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 3; ++w) {
    workers.emplace_back([&] {
      while (!stop) {
        const auto j = json::parse(service.handle_query(json{{"text", text}, {"k", 5}}.dump()).body);
        std::vector<std::uint64_t> got;
        for (const auto& item : j["results"]) got.push_back(item["id"].get<std::uint64_t>());
        if (got != expect_a && got != expect_b) ++bad;
        ++done;
      }
    });
  }
  for (int swap = 0; swap < 200; ++swap) service.install(swap % 2 ? a : b);
  while (done < 100) std::this_thread::yield();
  stop = true;
  for (auto& t : workers) t.join();
  EXPECT_EQ(bad, 0);
}

// ---------------------------------------------------------------- over HTTP

class LiveServer {
 public:
  explicit LiveServer(const SearchService& service) {
    service.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    return c;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(ServiceFixture, HttpRoutes) {
  SearchService service(config());
  LiveServer live(service);
  auto cli = live.client();

  auto health = cli.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["ready"], false);
  auto q = cli.Post("/api/query", R"({"text": "stage two", "k": 3})", "application/json");
  ASSERT_TRUE(q);
  EXPECT_EQ(q->status, 503);

  const auto snap = snapshot();
  service.install(snap);
  q = cli.Post("/api/query", R"({"text": "An image with Periodontal Stage Two.", "k": 3})", "application/json");
  ASSERT_TRUE(q);
  EXPECT_EQ(q->status, 200);
  EXPECT_EQ(q->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(json::parse(q->body)["results"].size(), 3u);

  for (const auto& [payload, status] : std::vector<std::pair<std::string, int>>{
           {"{", 400}, {R"({"text": "stage two", "k": 0})", 400}, {R"({"text": "", "k": 3})", 422}}) {
    q = cli.Post("/api/query", payload, "application/json");
    ASSERT_TRUE(q);
    EXPECT_EQ(q->status, status) << payload;
    EXPECT_TRUE(json::parse(q->body)["error"].contains("code"));
  }

  const auto id = snap->retriever.index().ids.front();
  const auto& meta = *snap->retriever.index().find(id);
  auto img = cli.Get("/api/image/" + std::to_string(id));
  ASSERT_TRUE(img);
  EXPECT_EQ(img->status, 200);
  EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
  EXPECT_NE(img->get_header_value("Cache-Control").find("immutable"), std::string::npos);
  const auto disk = bin::read_file(data_dir() + "/" + meta.path);
  EXPECT_EQ(img->body, std::string(disk.begin(), disk.end()));
  auto head = cli.Head("/api/image/" + std::to_string(id));
  ASSERT_TRUE(head);
  EXPECT_EQ(head->status, 200);
  EXPECT_TRUE(head->body.empty());
  EXPECT_EQ(head->get_header_value("Content-Type"), "image/png");
  auto missing = cli.Get("/api/image/424242424");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["code"], "unknown_image");

  auto root = cli.Get("/");
  ASSERT_TRUE(root);
  EXPECT_EQ(root->status, 200);
  EXPECT_NE(root->body.find("<title>search</title>"), std::string::npos);
  auto nowhere = cli.Get("/api/nothing");
  ASSERT_TRUE(nowhere);
  EXPECT_EQ(nowhere->status, 404);
  EXPECT_EQ(json::parse(nowhere->body)["error"]["code"], "not_found");

  health = cli.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(json::parse(health->body)["checkpoint_fingerprint"], sha256_hex(bin::read_file(checkpoint())));
}

TEST_F(ServiceFixture, HttpEquivalenceOnRandomQueries) {
  SearchService service(config());
  const auto snap = snapshot();
  service.install(snap);
  LiveServer live(service);
  auto cli = live.client();
  std::mt19937_64 rng(9);
  const auto lex = SynonymLexicon::builtin();
  for (int i = 0; i < 40; ++i) {
    const auto r = testing::random_record(rng);
    const auto caps = caption_variants(r, lex);
    const std::string text = caps[i % caps.size()];
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    auto res = cli.Post("/api/query", json{{"text", text}, {"k", k}}.dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    const auto j = json::parse(res->body);
    const auto lib = snap->retriever.query(text, std::min(k, snap->retriever.index().size()));
    ASSERT_EQ(j["results"].size(), lib.items.size());
    for (std::size_t n = 0; n < lib.items.size(); ++n) {
      EXPECT_EQ(j["results"][n]["id"].get<std::uint64_t>(), lib.items[n].image_id);
      EXPECT_EQ(j["results"][n]["score"].get<double>(), lib.items[n].score);
    }
  }
}

}  // namespace
}  // namespace radsearch
