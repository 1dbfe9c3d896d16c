#include "radsearch/evaluation/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "radsearch/encoders/vocabulary.hpp"
#include "radsearch/errors.hpp"

namespace radsearch {

std::string_view tier_name(Tier t) {
  switch (t) {
    case Tier::kLow:
      return "Low";
    case Tier::kMedium:
      return "Medium";
    case Tier::kHard:
      return "Hard";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

// Lowercase words separated by single spaces, with a space at each end so
// phrase lookups can match whole words only.
std::string normalize(const std::string& text) {
  std::string out = " ";
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-') {
      out.push_back(static_cast<char>(std::tolower(u)));
    } else if (out.back() != ' ') {
      out.push_back(' ');
    }
  }
  if (out.back() != ' ') out.push_back(' ');
  return out;
}

struct Location {
  std::optional<Region> region;
  std::optional<Jaw> jaw;
};

std::optional<Jaw> jaw_from_term(std::string_view term) {
  for (Jaw j : {Jaw::kUpper, Jaw::kLower})
    if (jaw_term(j) == term) return j;
  return std::nullopt;
}

// Earliest mention wins; at one position the longest phrase wins.
Location find_location(const std::string& norm, const SynonymLexicon& lexicon) {
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  Location best;
  const auto consider = [&](const std::string& canonical, const std::string& phrase) {
    const auto pos = norm.find(" " + phrase + " ");
    if (pos == std::string::npos) return;
    if (pos < best_pos || (pos == best_pos && phrase.size() > best_len)) {
      Location loc;
      if (auto r = region_from_name(canonical)) {
        loc.region = *r;
      } else if (auto j = jaw_from_term(canonical)) {
        loc.jaw = *j;
      } else {
        return;
      }
      best_pos = pos;
      best_len = phrase.size();
      best = loc;
    }
  };
  for (const auto& [canonical, synonyms] : lexicon.entries()) {
    consider(canonical, canonical);
    for (const auto& s : synonyms) {
      const std::string phrase = normalize(s);
      consider(canonical, phrase.substr(1, phrase.size() - 2));
    }
  }
  for (Region r : kAllRegions) consider(std::string(region_name(r)), std::string(region_name(r)));
  return best;
}

int stage_from_token(const std::string& t) {
  if (t == "one" || t == "1" || t == "i") return 1;
  if (t == "two" || t == "2" || t == "ii") return 2;
  if (t == "three" || t == "3" || t == "iii") return 3;
  return 0;
}

}  // namespace

ParsedQuery parse_query(const std::string& text, const SynonymLexicon& lexicon) {
  if (text.size() > kMaxCaptionChars) {
    throw LengthError("query is " + std::to_string(text.size()) + " characters, limit " +
                      std::to_string(kMaxCaptionChars));
  }
  const std::string norm = normalize(text);
  ParsedQuery q;

  static const std::regex stage_re(" stage ([a-z0-9]+) ");
  std::smatch m;
  if (!std::regex_search(norm, m, stage_re) || (q.attributes.stage = stage_from_token(m[1].str())) == 0) {
    throw UnparseableQueryError("no periodontal stage found in query \"" + text + "\"");
  }

  const Location loc = find_location(norm, lexicon);
  q.attributes.region = loc.region;
  q.attributes.jaw = loc.jaw;

  static const std::regex age_re(" (?:(\\d{1,3})-year-old|(\\d{1,3}) years? old|aged (\\d{1,3})) ");
  if (std::regex_search(norm, m, age_re)) {
    for (std::size_t g = 1; g <= 3; ++g)
      if (m[g].matched) q.attributes.age = std::stoi(m[g].str());
  }
  static const std::regex gender_re(" (male|female|man|woman|men|women) ");
  if (std::regex_search(norm, m, gender_re)) {
    const std::string g = m[1].str();
    q.attributes.gender = (g == "female" || g == "woman" || g == "women") ? Gender::kFemale : Gender::kMale;
  }
  // "other" counts only right before a gender word.
  static const std::regex ethnicity_re(" (white|black|hispanic|asian|other (?=male |female |man |woman ))");
  if (std::regex_search(norm, m, ethnicity_re)) {
    std::string e = m[1].str();
    if (e.back() == ' ') e.pop_back();
    q.attributes.ethnicity = ethnicity_from_name(e);
  }

  const auto& a = q.attributes;
  if (a.age || a.gender || a.ethnicity) {
    q.tier = Tier::kHard;
  } else if (a.region || a.jaw) {
    q.tier = Tier::kMedium;
  }
  return q;
}

ParsedQuery parse_query(const std::string& text) {
  static const SynonymLexicon lexicon = SynonymLexicon::builtin();
  return parse_query(text, lexicon);
}

bool judge_relevance(const QueryAttributes& q, const PatientRecord& r) {
  if (q.stage != r.stage) return false;
  if (q.region && *q.region != r.region) return false;
  if (q.jaw && *q.jaw != region_jaw(r.region)) return false;
  if (q.age && std::abs(*q.age - r.age) > kAgeTolerance) return false;
  if (q.gender && *q.gender != r.gender) return false;
  if (q.ethnicity && *q.ethnicity != r.ethnicity) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

void check_k(const Judgments& judged, std::size_t k) {
  if (k == 0) throw ArgumentError("k must be at least 1");
  if (judged.empty()) throw ArgumentError("metrics need at least one query");
  for (std::size_t q = 0; q < judged.size(); ++q) {
    if (judged[q].size() < k) {
      throw ArgumentError("query " + std::to_string(q) + " returned " + std::to_string(judged[q].size()) +
                          " results, fewer than k = " + std::to_string(k));
    }
  }
}

}  // namespace

double hit_at_k(const Judgments& judged, std::size_t k) {
  check_k(judged, k);
  std::size_t hits = 0;
  for (const auto& flags : judged)
    if (std::any_of(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(k), [](bool b) { return b; })) ++hits;
  return static_cast<double>(hits) / static_cast<double>(judged.size());
}

double precision_at_k(const Judgments& judged, std::size_t k) {
  check_k(judged, k);
  double total = 0.0;
  for (const auto& flags : judged) {
    const auto relevant = std::count(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(k), true);
    total += static_cast<double>(relevant) / static_cast<double>(k);
  }
  return total / static_cast<double>(judged.size());
}

double mrr(const Judgments& judged) {
  if (judged.empty()) throw ArgumentError("MRR needs at least one query");
  double total = 0.0;
  for (const auto& flags : judged) {
    const auto it = std::find(flags.begin(), flags.end(), true);
    if (it != flags.end()) total += 1.0 / static_cast<double>(it - flags.begin() + 1);
  }
  return total / static_cast<double>(judged.size());
}

double cohens_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw ArgumentError("kappa needs equal-length label sequences, got " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()));
  }
  if (a.empty()) throw ArgumentError("kappa needs at least one label pair");
  std::map<int, std::size_t> count_a, count_b;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++count_a[a[i]];
    ++count_b[b[i]];
    if (a[i] == b[i]) ++agree;
  }
  const double n = static_cast<double>(a.size());
  const double po = static_cast<double>(agree) / n;
  if (agree == a.size()) return 1.0;
  double pe = 0.0;
  for (const auto& [label, ca] : count_a) {
    const auto it = count_b.find(label);
    if (it != count_b.end()) pe += (static_cast<double>(ca) / n) * (static_cast<double>(it->second) / n);
  }
  return (po - pe) / (1.0 - pe);
}

MetricReport compute_metrics(const Judgments& judged) {
  MetricReport r;
  r.queries = judged.size();
  for (std::size_t k = 1; k <= 3; ++k) {
    r.hit[k - 1] = hit_at_k(judged, k);
    r.precision[k - 1] = precision_at_k(judged, k);
  }
  r.mrr = mrr(judged);
  return r;
}

// ---------------------------------------------------------------------------
// Suites

QuerySuite generate_suite(Tier tier, std::size_t count, const std::vector<PatientRecord>& records,
                          std::uint64_t seed, const SynonymLexicon& lexicon) {
  if (records.empty()) throw ArgumentError("cannot template queries without records");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(tier) + 1);
  std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
  QuerySuite suite{tier, {}};
  for (std::size_t i = 0; i < count; ++i) {
    const PatientRecord& r = records[pick(rng)];
    const std::string stage = "Periodontal Stage " + std::string(stage_word(r.stage));
    std::vector<std::string> places = {std::string(region_display(r.region))};
    if (const auto* syn = lexicon.synonyms(region_name(r.region))) {
      for (const auto& s : *syn) places.push_back(title_case(s));
    }
    const std::string place = places[std::uniform_int_distribution<std::size_t>(0, places.size() - 1)(rng)];
    std::string q;
    switch (tier) {
      case Tier::kLow:
        q = "An image with " + stage + ".";
        break;
      case Tier::kMedium:
        q = "An image with " + stage + " at the " + place + " region.";
        break;
      case Tier::kHard:
        q = "A " + std::to_string(r.age) + "-year-old " + std::string(ethnicity_name(r.ethnicity)) + " " +
            title_case(gender_name(r.gender)) + " with " + stage + " at " + place + " region.";
        break;
    }
    suite.queries.push_back(std::move(q));
  }
  return suite;
}

void write_suite(const std::string& path, const QuerySuite& suite) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write query suite " + path);
  for (const auto& q : suite.queries) out << q << '\n';
  if (!out) throw IoError("failed writing query suite " + path);
}

QuerySuite read_suite(const std::string& path, Tier tier) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open query suite " + path);
  QuerySuite suite{tier, {}};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) suite.queries.push_back(line);
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Agreement

double AgreementTable::at(const std::string& a, const std::string& b) const {
  const auto ia = std::find(labelers.begin(), labelers.end(), a);
  const auto ib = std::find(labelers.begin(), labelers.end(), b);
  if (ia == labelers.end() || ib == labelers.end()) throw ArgumentError("unknown labeler " + a + " / " + b);
  return kappa[static_cast<std::size_t>(ia - labelers.begin())][static_cast<std::size_t>(ib - labelers.begin())];
}

AgreementTable agreement_table(const std::vector<PatientRecord>& records, const std::vector<int>& model_stages,
                               const std::array<double, 3>& reliabilities, std::uint64_t seed) {
  if (records.size() != model_stages.size()) throw ArgumentError("one model stage per record required");
  std::vector<std::vector<int>> labels(5);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto set = simulate_annotators(i, records[i], reliabilities, rng);
    for (std::size_t a = 0; a < 3; ++a) labels[a].push_back(set.labels[a]);
    labels[3].push_back(set.resolved);
    labels[4].push_back(model_stages[i]);
  }
  AgreementTable t;
  t.labelers = {"Annotator 1", "Annotator 2", "Annotator 3", "Majority", "Model"};
  t.images = records.size();
  t.kappa.assign(5, std::vector<double>(5, 1.0));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) t.kappa[i][j] = t.kappa[j][i] = cohens_kappa(labels[i], labels[j]);
  return t;
}

// ---------------------------------------------------------------------------
// Harness

int model_stage(const Retriever& retriever, const PatientRecord& record, const SynonymLexicon& lexicon) {
  const auto captions = caption_variants(record, lexicon);
  const auto result = retriever.query(captions.back(), 1);
  return retriever.index().find(result.items.front().image_id)->record.stage;
}

namespace {

std::vector<bool> judge(const std::vector<ScoredImage>& items, const QueryAttributes& q,
                        const std::map<std::uint64_t, const PatientRecord*>& records) {
  std::vector<bool> flags;
  flags.reserve(items.size());
  for (const auto& it : items) flags.push_back(judge_relevance(q, *records.at(it.image_id)));
  return flags;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

EvaluationReport run_evaluation(const EvaluationInputs& in, const EvaluationConfig& config) {
  if (in.full == nullptr || in.image_encoder == nullptr || in.lexicon == nullptr || !in.pixels) {
    throw ArgumentError("evaluation needs the full model, an image encoder, a lexicon and a pixel loader");
  }
  if (in.test.empty()) throw ArgumentError("evaluation needs test images");
  const SynonymLexicon& lexicon = *in.lexicon;

  std::map<std::uint64_t, const PatientRecord*> records;
  std::vector<PatientRecord> test_records;
  for (const ImageEntry* e : in.test) {
    records[e->image_id] = &e->record;
    test_records.push_back(e->record);
  }
  const std::size_t n = in.test.size();

  EvaluationReport report;
  for (Tier t : kAllTiers) {
    const auto given = in.suites.find(t);
    report.suites[t] = given != in.suites.end()
                           ? given->second
                           : generate_suite(t, config.queries_per_tier, test_records, config.suite_seed, lexicon);
    if (report.suites[t].queries.empty()) throw ArgumentError(std::string(tier_name(t)) + " suite is empty");
  }
  std::map<Tier, std::vector<ParsedQuery>> parsed;
  for (Tier t : kAllTiers)
    for (const auto& q : report.suites[t].queries) parsed[t].push_back(parse_query(q, lexicon));

  const Retriever full(in.full->clone(), build_index(*in.full, in.test, in.pixels));
  const auto run_text = [&](const Retriever& r, Tier t) {
    Judgments judged;
    for (std::size_t i = 0; i < report.suites[t].queries.size(); ++i) {
      judged.push_back(judge(r.query(report.suites[t].queries[i], n).items, parsed[t][i].attributes, records));
    }
    return compute_metrics(judged);
  };
  for (Tier t : kAllTiers) report.tiers[t] = run_text(full, t);
  report.comparison[kSearcherFull] = report.tiers[Tier::kLow];

  if (in.no_augmentation != nullptr) {
    const Retriever no_aug(in.no_augmentation->clone(), build_index(*in.no_augmentation, in.test, in.pixels));
    report.comparison[kSearcherNoAugmentation] = run_text(no_aug, Tier::kLow);
  }

  {
    const auto store = build_caption_store(*in.full, in.test);
    Judgments judged;
    for (std::size_t i = 0; i < report.suites[Tier::kLow].queries.size(); ++i) {
      const auto res = text_only_query(report.suites[Tier::kLow].queries[i], n, store, *in.full);
      judged.push_back(judge(res.items, parsed[Tier::kLow][i].attributes, records));
    }
    report.comparison[kSearcherTextOnly] = compute_metrics(judged);
  }

  if (!in.exemplars.empty()) {
    const auto features = build_image_features(*in.image_encoder, in.test, in.pixels);
    std::mt19937_64 rng(config.suite_seed ^ 0x5bd1e995ULL);
    Judgments judged;
    for (const auto& q : parsed[Tier::kLow]) {
      std::vector<const ImageEntry*> pool;
      for (const ImageEntry* e : in.exemplars)
        if (judge_relevance(q.attributes, e->record)) pool.push_back(e);
      if (pool.empty()) pool = in.exemplars;
      const ImageEntry* exemplar = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      const auto res = image_only_query(to_tensor(in.pixels(*exemplar)), n, features, *in.image_encoder);
      judged.push_back(judge(res.items, q.attributes, records));
    }
    report.comparison[kSearcherImageOnly] = compute_metrics(judged);
  }

  CorpusConfig kc = CorpusConfig::desk();
  kc.n_patients = config.kappa_patients;
  kc.seed = config.kappa_seed;
  const auto kappa_manifest = generate_manifest(kc, lexicon);
  std::vector<PatientRecord> kappa_records;
  std::vector<int> model_stages;
  std::map<int, int> by_stage;  // the stage-only query depends on the stage alone
  for (const auto& e : kappa_manifest.entries) {
    kappa_records.push_back(e.record);
    auto it = by_stage.find(e.record.stage);
    if (it == by_stage.end()) it = by_stage.emplace(e.record.stage, model_stage(full, e.record, lexicon)).first;
    model_stages.push_back(it->second);
  }
  report.agreement = agreement_table(kappa_records, model_stages, config.reliabilities, config.kappa_seed);
  return report;
}

std::string EvaluationReport::table2() const {
  std::ostringstream out;
  out << "Searcher          Hit@1   Hit@2   Hit@3   P@1     P@2     P@3     MRR     Queries\n";
  for (const char* name : {kSearcherFull, kSearcherNoAugmentation, kSearcherTextOnly, kSearcherImageOnly}) {
    const auto it = comparison.find(name);
    if (it == comparison.end()) continue;
    const auto& m = it->second;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-17s %-7s %-7s %-7s %-7s %-7s %-7s %-7s %zu\n", name, fmt(m.hit[0]).c_str(),
                  fmt(m.hit[1]).c_str(), fmt(m.hit[2]).c_str(), fmt(m.precision[0]).c_str(),
                  fmt(m.precision[1]).c_str(), fmt(m.precision[2]).c_str(), fmt(m.mrr).c_str(), m.queries);
    out << buf;
  }
  return out.str();
}

std::string EvaluationReport::table3() const {
  std::ostringstream out;
  out << "Tier     Hit@1   Hit@2   Hit@3   MRR     Queries  Example\n";
  for (const auto& [tier, m] : tiers) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %-7s %-7s %-7s %-7s %-8zu ", std::string(tier_name(tier)).c_str(),
                  fmt(m.hit[0]).c_str(), fmt(m.hit[1]).c_str(), fmt(m.hit[2]).c_str(), fmt(m.mrr).c_str(),
                  m.queries);
    out << buf;
    const auto s = suites.find(tier);
    out << (s != suites.end() && !s->second.queries.empty() ? s->second.queries.front() : "") << '\n';
  }
  return out.str();
}

std::string EvaluationReport::table4() const {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s", "");
  out << buf;
  for (const auto& l : agreement.labelers) {
    std::snprintf(buf, sizeof buf, " %-12s", l.c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < agreement.labelers.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-12s", agreement.labelers[i].c_str());
    out << buf;
    for (std::size_t j = 0; j < agreement.labelers.size(); ++j) {
      std::snprintf(buf, sizeof buf, " %-12s", fmt(agreement.kappa[i][j]).c_str());
      out << buf;
    }
    out << '\n';
  }
  out << "images: " << agreement.images << '\n';
  return out.str();
}

std::string EvaluationReport::key_values() const {
  std::ostringstream out;
  const auto metrics = [&](const std::string& prefix, const MetricReport& m) {
    for (std::size_t k = 0; k < 3; ++k) out << prefix << ".hit@" << k + 1 << '=' << fmt(m.hit[k]) << '\n';
    for (std::size_t k = 0; k < 3; ++k) out << prefix << ".precision@" << k + 1 << '=' << fmt(m.precision[k]) << '\n';
    out << prefix << ".mrr=" << fmt(m.mrr) << '\n' << prefix << ".queries=" << m.queries << '\n';
  };
  for (const auto& [name, m] : comparison) metrics("table2." + name, m);
  for (const auto& [tier, m] : tiers) metrics("table3." + to_lower(tier_name(tier)), m);
  for (std::size_t i = 0; i < agreement.labelers.size(); ++i) {
    for (std::size_t j = i + 1; j < agreement.labelers.size(); ++j) {
      auto key = [](std::string s) {
        std::replace(s.begin(), s.end(), ' ', '_');
        return to_lower(s);
      };
      out << "table4." << key(agreement.labelers[i]) << '.' << key(agreement.labelers[j]) << '='
          << fmt(agreement.kappa[i][j]) << '\n';
    }
  }
  out << "table4.images=" << agreement.images << '\n';
  return out.str();
}

}  // namespace radsearch
