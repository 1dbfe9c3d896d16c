#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "radsearch/augment/augment.hpp"
#include "radsearch/errors.hpp"
#include "radsearch/synthdata/synthdata.hpp"

namespace radsearch {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  const std::string lower = to_lower(name);
  if (lower == "train") return Split::kTrain;
  if (lower == "val" || lower == "validation") return Split::kValidation;
  if (lower == "test") return Split::kTest;
  throw FormatError("unknown split '" + std::string(name) + "'");
}

SplitCounts DatasetManifest::counts() const {
  SplitCounts c;
  std::vector<std::pair<std::uint64_t, Split>> seen;
  for (const auto& e : entries) {
    const auto s = static_cast<std::size_t>(e.split);
    ++c.images[s];
    const std::pair<std::uint64_t, Split> key{e.record.patient_id, e.split};
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      seen.push_back(key);
      ++c.patients[s];
    }
  }
  return c;
}

std::vector<const ImageEntry*> DatasetManifest::split(Split s) const {
  std::vector<const ImageEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

const ImageEntry* DatasetManifest::find(std::uint64_t image_id) const {
  // ids are dense from 1 when generated, but manifests read from disk need not be
  if (image_id >= 1 && image_id <= entries.size() && entries[image_id - 1].image_id == image_id) {
    return &entries[image_id - 1];
  }
  for (const auto& e : entries)
    if (e.image_id == image_id) return &e;
  return nullptr;
}

CorpusConfig CorpusConfig::desk() { return {}; }

CorpusConfig CorpusConfig::paper_scale() {
  CorpusConfig c;
  c.n_patients = 45;
  c.min_images_per_patient = 12;
  c.max_images_per_patient = 18;
  return c;
}

std::vector<Split> assign_splits(std::size_t n_patients, std::uint64_t seed) {
  if (n_patients < 3) {
    throw ConfigError("need at least 3 patients to populate train/val/test, got " + std::to_string(n_patients));
  }
  constexpr double kShares[3] = {0.8, 0.1, 0.1};
  std::size_t quota[3];
  double remainder[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = kShares[i] * static_cast<double>(n_patients);
    quota[i] = static_cast<std::size_t>(exact);
    remainder[i] = exact - static_cast<double>(quota[i]);
    assigned += quota[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t k = 0; assigned < n_patients; ++k, ++assigned) ++quota[order[k % 3]];
  for (int i = 1; i < 3; ++i) {
    if (quota[i] == 0) {
      ++quota[i];
      --quota[0];
    }
  }

  std::vector<std::size_t> perm(n_patients);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5a17c0ffee5eedULL);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Split> out(n_patients);
  for (std::size_t k = 0; k < n_patients; ++k) {
    out[perm[k]] = k < quota[0] ? Split::kTrain : (k < quota[0] + quota[1] ? Split::kValidation : Split::kTest);
  }
  return out;
}

std::uint64_t image_seed(std::uint64_t corpus_seed, std::uint64_t image_id) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = corpus_seed * 0x9e3779b97f4a7c15ULL + image_id + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

double sample_rbl(int stage, std::mt19937_64& rng) {
  // Stage 2 spans the closed interval [15, 33]; stage 3 starts just past 33.
  switch (stage) {
    case 1: return std::uniform_real_distribution<double>(0.0, 15.0)(rng);
    case 2: return std::uniform_real_distribution<double>(15.0, std::nextafter(33.0, 34.0))(rng);
    default: return std::uniform_real_distribution<double>(std::nextafter(33.0, 34.0), 70.0)(rng);
  }
}

void check(const CorpusConfig& c) {
  if (c.min_images_per_patient == 0 || c.min_images_per_patient > c.max_images_per_patient) {
    throw ConfigError("images per patient range [" + std::to_string(c.min_images_per_patient) + ", " +
                      std::to_string(c.max_images_per_patient) + "] is empty");
  }
  if (c.min_age < 18 || c.min_age > c.max_age) {
    throw ConfigError("age range [" + std::to_string(c.min_age) + ", " + std::to_string(c.max_age) + "] invalid");
  }
  double total = 0.0;
  for (double p : c.stage_probabilities) {
    if (!(p >= 0.0)) throw ConfigError("stage probabilities must be non-negative");
    total += p;
  }
  if (!(total > 0.0)) throw ConfigError("stage probabilities sum to zero");
}

}  // namespace

DatasetManifest generate_manifest(const CorpusConfig& config, const SynonymLexicon& lexicon) {
  check(config);
  const auto splits = assign_splits(config.n_patients, config.seed);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> age(config.min_age, config.max_age);
  std::uniform_int_distribution<std::size_t> n_images(config.min_images_per_patient, config.max_images_per_patient);
  std::uniform_int_distribution<std::size_t> gender(0, kAllGenders.size() - 1);
  std::uniform_int_distribution<std::size_t> ethnicity(0, kAllEthnicities.size() - 1);
  std::uniform_int_distribution<std::size_t> region(0, kAllRegions.size() - 1);
  std::discrete_distribution<int> stage(config.stage_probabilities.begin(), config.stage_probabilities.end());

  DatasetManifest manifest;
  manifest.seed = config.seed;
  std::uint64_t next_id = 1;
  for (std::size_t p = 0; p < config.n_patients; ++p) {
    PatientRecord base;
    base.patient_id = p + 1;
    base.age = age(rng);
    base.gender = kAllGenders[gender(rng)];
    base.ethnicity = kAllEthnicities[ethnicity(rng)];
    const std::size_t count = n_images(rng);
    for (std::size_t i = 0; i < count; ++i) {
      PatientRecord rec = base;
      rec.stage = stage(rng) + 1;
      rec.rbl_percent = sample_rbl(rec.stage, rng);
      rec.region = kAllRegions[region(rng)];
      ImageEntry entry;
      entry.image_id = next_id++;
      char path[32];
      std::snprintf(path, sizeof path, "images/%06llu.png", static_cast<unsigned long long>(entry.image_id));
      entry.path = path;
      entry.split = splits[p];
      entry.record = rec;
      const auto captions = caption_variants(rec, lexicon);
      entry.captions.assign(captions.begin(), captions.end());
      manifest.entries.push_back(std::move(entry));
    }
  }
  return manifest;
}

Corpus generate_corpus(const CorpusConfig& config, const SynonymLexicon& lexicon) {
  Corpus corpus{generate_manifest(config, lexicon), {}};
  corpus.images.reserve(corpus.manifest.entries.size());
  for (const auto& e : corpus.manifest.entries) {
    corpus.images.push_back(quantize(render_image(e.record, image_seed(config.seed, e.image_id))));
  }
  return corpus;
}

int majority_vote(const std::array<int, 3>& labels) {
  if (labels[0] == labels[1] || labels[0] == labels[2]) return labels[0];
  if (labels[1] == labels[2]) return labels[1];
  return labels[2];
}

AnnotationSet simulate_annotators(std::uint64_t image_id, const PatientRecord& record,
                                  const std::array<double, 3>& reliabilities, std::mt19937_64& rng) {
  for (double r : reliabilities) {
    if (!(r > 1.0 / 3.0 && r <= 1.0)) {
      throw RangeError("annotator reliability " + std::to_string(r) + " outside (1/3, 1]");
    }
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AnnotationSet out;
  out.image_id = image_id;
  for (std::size_t a = 0; a < 3; ++a) {
    const double u = unit(rng);
    const bool wrong_pick = unit(rng) < 0.5;
    if (u < reliabilities[a]) {
      out.labels[a] = record.stage;
    } else {
      // the two other stages, in ascending order
      int wrong[2];
      int k = 0;
      for (int s = 1; s <= 3; ++s)
        if (s != record.stage) wrong[k++] = s;
      out.labels[a] = wrong[wrong_pick ? 1 : 0];
    }
  }
  out.resolved = majority_vote(out.labels);
  return out;
}

}  // namespace radsearch
