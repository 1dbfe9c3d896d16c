// Command-line driver: generate-data, train, index, query, evaluate, serve.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>

#include "radsearch/errors.hpp"
#include "radsearch/evaluation/evaluation.hpp"
#include "radsearch/service/service.hpp"
#include "radsearch/training/training.hpp"

namespace fs = std::filesystem;
using namespace radsearch;

namespace {

constexpr int kUsageExit = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<const ImageEntry*> select_split(const DatasetManifest& manifest, const std::string& split) {
  if (split == "all") {
    std::vector<const ImageEntry*> out;
    for (const auto& e : manifest.entries) out.push_back(&e);
    return out;
  }
  return manifest.split(split_from_name(split));
}

PixelLoader disk_loader(const std::string& root) {
  return [root](const ImageEntry& e) { return read_png((fs::path(root) / e.path).string()); };
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct GenerateArgs {
  std::size_t patients = 60;
  std::size_t min_images = 10;
  std::size_t max_images = 16;
  std::uint64_t seed = 7;
  std::string out;
};

int generate(const GenerateArgs& a) {
  if (a.min_images < 1 || a.min_images > a.max_images) {
    throw UsageError("--min-images must be between 1 and --max-images");
  }
  CorpusConfig cfg = CorpusConfig::desk();
  cfg.n_patients = a.patients;
  cfg.min_images_per_patient = a.min_images;
  cfg.max_images_per_patient = a.max_images;
  cfg.seed = a.seed;
  const auto corpus = generate_corpus(cfg, SynonymLexicon::builtin());
  write_corpus(a.out, corpus);
  const auto c = corpus.manifest.counts();
  std::printf("wrote %zu images (train %zu, val %zu, test %zu) to %s\n", corpus.images.size(), c.images[0],
              c.images[1], c.images[2], a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string preset = "desk";
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<double> tau;
  std::optional<std::size_t> batch;
  std::uint64_t seed = 1;
  bool no_augmentation = false;
  std::string log;
};

int train_cmd(const TrainArgs& a) {
  TrainConfig cfg = a.preset == "desk" ? TrainConfig::desk() : TrainConfig{};
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.tau) cfg.temperature = *a.tau;
  if (a.batch) cfg.batch_size = *a.batch;
  cfg.seed = a.seed;
  cfg.augmentation = !a.no_augmentation;
  const Corpus corpus = read_corpus(a.data);
  const CorpusData data(corpus);
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw IoError("cannot write metrics log " + a.log);
  }
  const auto result = train(cfg, data, [&](const EpochStats& s) {
    const std::string line = format_epoch_line(s);
    std::cout << line << std::endl;
    if (log) log << line << std::endl;
  });
  save_checkpoint(a.out, result.best);
  std::printf("initial train loss %.6f, best epoch %zu, %.1f s, checkpoint %s\n", result.report.initial_train_loss,
              result.report.best_epoch, result.report.wall_seconds, a.out.c_str());
  return 0;
}

struct IndexArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::string split = "test";
};

int index_cmd(const IndexArgs& a) {
  const Model model = load_checkpoint(a.checkpoint);
  const auto manifest = read_manifest((fs::path(a.data) / "manifest.jsonl").string());
  const auto index = build_index(model, select_split(manifest, a.split), disk_loader(a.data));
  save_index(a.out, index);
  std::printf("indexed %zu images into %s\n", index.size(), a.out.c_str());
  return 0;
}

struct QueryArgs {
  std::string checkpoint;
  std::string index;
  std::string text;
  std::size_t k = 3;
};

int query_cmd(const QueryArgs& a) {
  const Retriever retriever(load_checkpoint(a.checkpoint), load_index(a.index));
  const auto result = retriever.query(a.text, a.k);
  for (std::size_t i = 0; i < result.items.size(); ++i) {
    const auto& it = result.items[i];
    const auto& r = retriever.index().find(it.image_id)->record;
    std::string region(region_name(r.region));
    std::replace(region.begin(), region.end(), ' ', '_');
    std::printf("%zu %llu %.6f %d %s\n", i + 1, static_cast<unsigned long long>(it.image_id), it.score, r.stage,
                region.c_str());
  }
  return 0;
}

struct EvaluateArgs {
  std::string data;
  std::string checkpoint;
  std::string no_aug_checkpoint;
  std::string out;
  std::string suite = "default";
  std::uint64_t suite_seed = 11;
  std::uint64_t seed = 1;
};

int evaluate_cmd(const EvaluateArgs& a) {
  const SynonymLexicon lexicon = SynonymLexicon::builtin();
  const Model full = load_checkpoint(a.checkpoint);
  std::optional<Model> no_aug;
  if (!a.no_aug_checkpoint.empty()) no_aug = load_checkpoint(a.no_aug_checkpoint);
  const Model untrained(full.config(), full.vocab(), a.seed);
  const auto manifest = read_manifest((fs::path(a.data) / "manifest.jsonl").string());

  EvaluationInputs in;
  in.full = &full;
  in.no_augmentation = no_aug ? &*no_aug : nullptr;
  in.image_encoder = &untrained;
  in.test = manifest.split(Split::kTest);
  in.exemplars = manifest.split(Split::kTrain);
  in.pixels = disk_loader(a.data);
  in.lexicon = &lexicon;
  if (a.suite != "default") {
    for (Tier t : kAllTiers) {
      const fs::path p = fs::path(a.suite) / (to_lower(tier_name(t)) + ".txt");
      if (!fs::exists(p)) throw UsageError("suite directory lacks " + p.string());
      in.suites[t] = read_suite(p.string(), t);
    }
  }
  EvaluationConfig cfg;
  cfg.suite_seed = a.suite_seed;
  const auto report = run_evaluation(in, cfg);

  const fs::path out(a.out);
  fs::create_directories(out / "suites");
  write_text(out / "table2.txt", report.table2());
  write_text(out / "table3.txt", report.table3());
  write_text(out / "table4.txt", report.table4());
  write_text(out / "report.kv", report.key_values());
  for (const auto& [tier, suite] : report.suites) {
    write_suite((out / "suites" / (to_lower(tier_name(tier)) + ".txt")).string(), suite);
  }
  std::cout << report.table2() << '\n' << report.table3() << '\n' << report.table4();
  return 0;
}

int serve_cmd(const ServiceConfig& cfg) {
  SearchService service(cfg);
  service.install(load_snapshot(cfg.checkpoint_path, cfg.index_path, cfg.image_root));
  httplib::Server server;
  service.mount(server);
  std::printf("listening on http://%s:%d (no authentication)\n", cfg.host.c_str(), cfg.port);
  std::fflush(stdout);
  if (!server.listen(cfg.host, cfg.port)) throw IoError("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-radiograph retrieval: data generation, training, indexing, search and evaluation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "Write a synthetic corpus (manifest + PNG images)");
  g->add_option("--patients", gen.patients, "Number of patients")->check(CLI::Range(3, 100000));
  g->add_option("--min-images", gen.min_images, "Fewest images per patient");
  g->add_option("--max-images", gen.max_images, "Most images per patient");
  g->add_option("--seed", gen.seed, "Corpus seed");
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the dual encoder and save the best checkpoint");
  t->add_option("--data", tr.data, "Corpus directory")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--preset", tr.preset, "desk (30 epochs) or paper (lr 1e-4, 100 epochs, tau 1)")
      ->check(CLI::IsMember({"desk", "paper"}));
  t->add_option("--epochs", tr.epochs, "Override the epoch count");
  t->add_option("--lr", tr.lr, "Override the learning rate");
  t->add_option("--tau", tr.tau, "Override the temperature");
  t->add_option("--batch", tr.batch, "Override the batch size");
  t->add_option("--seed", tr.seed, "Model and shuffling seed");
  t->add_flag("--no-augmentation", tr.no_augmentation, "Train on original images and caption 1 only");
  t->add_option("--log", tr.log, "Metrics log (one line per epoch)");

  IndexArgs ix;
  auto* i = app.add_subcommand("index", "Embed a split into an index file plus metadata sidecar");
  i->add_option("--data", ix.data, "Corpus directory")->required();
  i->add_option("--checkpoint", ix.checkpoint, "Checkpoint path")->required();
  i->add_option("--out", ix.out, "Index path")->required();
  i->add_option("--split", ix.split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));

  QueryArgs qa;
  auto* q = app.add_subcommand("query", "Rank indexed images for a text query");
  q->add_option("--checkpoint", qa.checkpoint, "Checkpoint path")->required();
  q->add_option("--index", qa.index, "Index path")->required();
  q->add_option("--text", qa.text, "Query text")->required();
  q->add_option("--k", qa.k, "Number of results")->check(CLI::PositiveNumber);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Write the comparison, tier and agreement reports");
  e->add_option("--data", ev.data, "Corpus directory")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Full-model checkpoint")->required();
  e->add_option("--no-aug-checkpoint", ev.no_aug_checkpoint, "Checkpoint trained without augmentation");
  e->add_option("--out", ev.out, "Report directory")->required();
  e->add_option("--suite", ev.suite, "'default' or a directory with low.txt, medium.txt, hard.txt");
  e->add_option("--suite-seed", ev.suite_seed, "Seed for generated suites");
  e->add_option("--seed", ev.seed, "Seed of the untrained image encoder");

  ServiceConfig sc;
  auto* s = app.add_subcommand("serve", "Serve the search API and the UI bundle");
  s->add_option("--checkpoint", sc.checkpoint_path, "Checkpoint path")->required()->check(CLI::ExistingFile);
  s->add_option("--index", sc.index_path, "Index path")->required()->check(CLI::ExistingFile);
  s->add_option("--data", sc.image_root, "Corpus directory holding the images")->required()->check(CLI::ExistingDirectory);
  s->add_option("--static", sc.static_root, "UI bundle directory served at /")->check(CLI::ExistingDirectory);
  s->add_option("--host", sc.host, "Listen address");
  s->add_option("--port", sc.port, "Listen port")->check(CLI::Range(0, 65535));
  s->add_option("--max-k", sc.max_k, "Largest k a request may ask for")->check(CLI::PositiveNumber);
  s->add_option("--timeout", sc.request_timeout_seconds, "Socket read/write timeout in seconds")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsageExit;
  }

  try {
    if (*g) return generate(gen);
    if (*t) return train_cmd(tr);
    if (*i) return index_cmd(ix);
    if (*q) return query_cmd(qa);
    if (*e) return evaluate_cmd(ev);
    if (*s) return serve_cmd(sc);
  } catch (const UsageError& ex) {
    std::fprintf(stderr, "usage error: %s\n", ex.what());
    return kUsageExit;
  } catch (const Error& ex) {
    std::fprintf(stderr, "error [%s]: %s\n", ex.code().c_str(), ex.what());
    return 1;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return kUsageExit;
}
