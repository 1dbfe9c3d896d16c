#pragma once

// Query parsing, relevance, ranking metrics, agreement statistics and the
// desk-scale evaluation harness.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "radsearch/augment/augment.hpp"
#include "radsearch/retrieval/retrieval.hpp"

namespace radsearch {

enum class Tier { kLow, kMedium, kHard };
inline constexpr std::array<Tier, 3> kAllTiers = {Tier::kLow, Tier::kMedium, Tier::kHard};
std::string_view tier_name(Tier t);  // "Low" / "Medium" / "Hard"

struct QueryAttributes {
  int stage = 0;
  std::optional<Region> region;
  std::optional<Jaw> jaw;  // set when the query names a jaw but no region
  std::optional<int> age;
  std::optional<Gender> gender;
  std::optional<Ethnicity> ethnicity;

  friend bool operator==(const QueryAttributes&, const QueryAttributes&) = default;
};

struct ParsedQuery {
  QueryAttributes attributes;
  Tier tier = Tier::kLow;
};

// Low: stage only. Medium: stage and a location. Hard: any demographic.
// Throws LengthError past 200 characters, UnparseableQueryError without a stage.
ParsedQuery parse_query(const std::string& text, const SynonymLexicon& lexicon);
ParsedQuery parse_query(const std::string& text);  // builtin lexicon

inline constexpr int kAgeTolerance = 5;
bool judge_relevance(const QueryAttributes& query, const PatientRecord& record);

// ---------------------------------------------------------------------------
// Metrics. Each query contributes the relevance flags of its returned list in
// rank order.

using Judgments = std::vector<std::vector<bool>>;

// Throw ArgumentError for k == 0 or k beyond a returned list.
double hit_at_k(const Judgments& judged, std::size_t k);
double precision_at_k(const Judgments& judged, std::size_t k);
// First relevant rank over the whole returned list; 0 when none is relevant.
// Throws ArgumentError for an empty query set.
double mrr(const Judgments& judged);

// Throws ArgumentError on length mismatch or empty input. 1 when the
// observed agreement is perfect.
double cohens_kappa(const std::vector<int>& a, const std::vector<int>& b);

struct MetricReport {
  std::array<double, 3> hit{};        // @1, @2, @3
  std::array<double, 3> precision{};  // @1, @2, @3
  double mrr = 0.0;
  std::size_t queries = 0;
};

MetricReport compute_metrics(const Judgments& judged);

// ---------------------------------------------------------------------------
// Query suites

struct QuerySuite {
  Tier tier = Tier::kLow;
  std::vector<std::string> queries;
};

inline constexpr std::size_t kDefaultSuiteSize = 60;

// Templated from records drawn (seeded) from `records`, so every query has at
// least one relevant record among them.
QuerySuite generate_suite(Tier tier, std::size_t count, const std::vector<PatientRecord>& records,
                          std::uint64_t seed, const SynonymLexicon& lexicon);

// One query per line.
void write_suite(const std::string& path, const QuerySuite& suite);
QuerySuite read_suite(const std::string& path, Tier tier);

// ---------------------------------------------------------------------------
// Agreement

inline constexpr std::array<double, 3> kDefaultReliabilities = {0.6, 0.7, 0.9};

struct AgreementTable {
  std::vector<std::string> labelers;          // Annotator 1..3, Majority, Model
  std::vector<std::vector<double>> kappa;     // symmetric, unit diagonal
  std::size_t images = 0;

  double at(const std::string& a, const std::string& b) const;
};

// Kappa matrix over the given true records, annotations simulated with
// `reliabilities` and the model's stage prediction per record.
AgreementTable agreement_table(const std::vector<PatientRecord>& records, const std::vector<int>& model_stages,
                               const std::array<double, 3>& reliabilities, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Harness

struct EvaluationConfig {
  std::uint64_t suite_seed = 11;
  std::size_t queries_per_tier = kDefaultSuiteSize;
  std::size_t kappa_patients = 180;  // about 2300 images
  std::uint64_t kappa_seed = 1007;
  std::array<double, 3> reliabilities = kDefaultReliabilities;
};

// Everything the harness reads. The no-augmentation model is optional.
struct EvaluationInputs {
  const Model* full = nullptr;
  const Model* no_augmentation = nullptr;
  // Untrained image encoder for the image-only searcher.
  const Model* image_encoder = nullptr;
  std::vector<const ImageEntry*> test;
  // Pool the image-only searcher draws its query exemplars from.
  std::vector<const ImageEntry*> exemplars;
  PixelLoader pixels;
  const SynonymLexicon* lexicon = nullptr;
  // Suites to run; tiers missing here are generated from the test records.
  std::map<Tier, QuerySuite> suites;
};

struct EvaluationReport {
  std::map<std::string, MetricReport> comparison;  // keyed by searcher, Low-tier suite
  std::map<Tier, MetricReport> tiers;              // full model
  std::map<Tier, QuerySuite> suites;
  AgreementTable agreement;

  std::string table2() const;
  std::string table3() const;
  std::string table4() const;
  // "key=value" lines.
  std::string key_values() const;
};

inline constexpr const char* kSearcherFull = "full";
inline constexpr const char* kSearcherNoAugmentation = "no_augmentation";
inline constexpr const char* kSearcherTextOnly = "text_only";
inline constexpr const char* kSearcherImageOnly = "image_only";

// Stage the model assigns to a record: the stage of the top-1 result for the
// record's stage-only caption.
int model_stage(const Retriever& retriever, const PatientRecord& record, const SynonymLexicon& lexicon);

EvaluationReport run_evaluation(const EvaluationInputs& inputs, const EvaluationConfig& config);

}  // namespace radsearch
