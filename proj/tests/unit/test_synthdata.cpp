#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "radsearch/augment/augment.hpp"
#include "radsearch/binary_io.hpp"
#include "radsearch/synthdata/synthdata.hpp"
#include "support.hpp"

namespace radsearch {
namespace {

using G = RenderGeometry;
using testing::ScratchDir;

// ---------------------------------------------------------------- staging

TEST(Staging, ThresholdBoundaries) {
  EXPECT_EQ(stage_from_rbl(0.0), 1);
  EXPECT_EQ(stage_from_rbl(14.9), 1);
  EXPECT_EQ(stage_from_rbl(14.99), 1);
  EXPECT_EQ(stage_from_rbl(std::nextafter(15.0, 0.0)), 1);
  EXPECT_EQ(stage_from_rbl(15.0), 2);
  EXPECT_EQ(stage_from_rbl(33.0), 2);
  EXPECT_EQ(stage_from_rbl(std::nextafter(33.0, 34.0)), 3);
  EXPECT_EQ(stage_from_rbl(33.01), 3);
  EXPECT_EQ(stage_from_rbl(100.0), 3);
}

TEST(Staging, OutOfRangeIsRangeError) {
  EXPECT_THROW(stage_from_rbl(-0.01), RangeError);
  EXPECT_THROW(stage_from_rbl(100.01), RangeError);
  EXPECT_THROW(stage_from_rbl(std::nan("")), RangeError);
}

TEST(Staging, IntervalsPartitionTheRange) {
  for (int i = 0; i <= 10000; ++i) {
    const double r = i / 100.0;
    const int expect = r < 15.0 ? 1 : (r <= 33.0 ? 2 : 3);
    EXPECT_EQ(stage_from_rbl(r), expect) << r;
  }
}

// ---------------------------------------------------------------- renderer

// Crest row read back from a bone-only strip right of the teeth: the first
// row whose strip mean crosses midway between background and bone.
double read_back_rbl(const ImageTensor& im) {
  auto strip_mean = [&](std::size_t y) {
    double s = 0;
    for (std::size_t x = 195; x < 221; ++x) s += im.at(0, y, x);
    return s / 26.0;
  };
  double bg = 0, bone = 0;
  for (std::size_t y = 35; y < 60; ++y) bg += strip_mean(y) / 25.0;
  for (std::size_t y = 198; y < 220; ++y) bone += strip_mean(y) / 22.0;
  const double threshold = (bg + bone) / 2.0;
  for (std::size_t y = G::kCejRow; y < G::kSize; ++y) {
    if (strip_mean(y) > threshold) {
      return (static_cast<double>(y) + 0.5 - G::kCejRow) / G::kRootLength * 100.0;
    }
  }
  return 100.0;
}

TEST(Render, DeterministicAndInRange) {
  std::mt19937_64 rng(1);
  const auto r = testing::random_record(rng);
  const auto a = render_image(r, 77);
  EXPECT_EQ(a, render_image(r, 77));
  EXPECT_NE(a, render_image(r, 78));
  EXPECT_EQ(a.height(), 224u);
  EXPECT_EQ(a.width(), 224u);
  EXPECT_NO_THROW(a.validate(224, 224));
}

TEST(Render, BandDepthReadsBackBoneLoss) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> rbl(0.0, 100.0);
  for (int trial = 0; trial < 60; ++trial) {
    auto r = testing::random_record(rng);
    r.rbl_percent = trial < 4 ? std::vector<double>{0.0, 15.0, 33.0, 100.0}[trial] : rbl(rng);
    r.stage = stage_from_rbl(r.rbl_percent);
    const auto im = render_image(r, trial);
    EXPECT_NEAR(read_back_rbl(im), r.rbl_percent, 2.0) << "trial " << trial;
  }
}

TEST(Render, RegionOnlyChangesTheFiducialCorner) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = testing::random_record(rng);
    auto b = a;
    b.region = kAllRegions[(static_cast<std::size_t>(a.region) + 1 + trial % 5) % 6];
    const auto ia = render_image(a, trial);
    const auto ib = render_image(b, trial);
    const std::size_t corner = G::kFiducialOrigin + G::kFiducialExtent;
    bool corner_differs = false;
    for (std::size_t y = 0; y < G::kSize; ++y)
      for (std::size_t x = 0; x < G::kSize; ++x) {
        const bool inside = y < corner && x < corner;
        if (inside) {
          corner_differs = corner_differs || ia.at(0, y, x) != ib.at(0, y, x);
        } else {
          ASSERT_EQ(ia.at(0, y, x), ib.at(0, y, x)) << y << "," << x;
        }
      }
    EXPECT_TRUE(corner_differs);
  }
}

TEST(Render, SixDistinctFiducialLayouts) {
  PatientRecord r;
  std::set<std::vector<float>> layouts;
  for (Region region : kAllRegions) {
    r.region = region;
    const auto im = render_image(r, 5);
    std::vector<float> corner;
    for (std::size_t y = 0; y < 30; ++y)
      for (std::size_t x = 0; x < 30; ++x) corner.push_back(im.at(0, y, x) == 1.0f ? 1.0f : 0.0f);
    layouts.insert(corner);
  }
  EXPECT_EQ(layouts.size(), 6u);
}

TEST(Render, ChannelsAreIdentical) {
  const auto im = render_image(PatientRecord{}, 9);
  for (std::size_t y = 0; y < 224; y += 7)
    for (std::size_t x = 0; x < 224; x += 5) {
      EXPECT_EQ(im.at(0, y, x), im.at(1, y, x));
      EXPECT_EQ(im.at(0, y, x), im.at(2, y, x));
    }
}

// ---------------------------------------------------------------- corpus

CorpusConfig small_config(std::uint64_t seed, std::size_t patients = 20) {
  CorpusConfig c;
  c.n_patients = patients;
  c.min_images_per_patient = 2;
  c.max_images_per_patient = 4;
  c.seed = seed;
  return c;
}

TEST(Corpus, RecordsAreValid) {
  const auto m = generate_manifest(small_config(4, 40), SynonymLexicon::builtin());
  std::set<std::uint64_t> ids;
  for (const auto& e : m.entries) {
    EXPECT_TRUE(ids.insert(e.image_id).second);
    EXPECT_GE(e.record.age, 18);
    EXPECT_EQ(e.record.stage, stage_from_rbl(e.record.rbl_percent));
    EXPECT_EQ(e.captions.size(), kCaptionVariants);
    const auto expect = caption_variants(e.record, SynonymLexicon::builtin());
    EXPECT_TRUE(std::equal(expect.begin(), expect.end(), e.captions.begin()));
    EXPECT_EQ(m.find(e.image_id), &e);
  }
  EXPECT_EQ(m.find(999999), nullptr);
}

TEST(Corpus, SplitsPartitionPatientsEightyTenTen) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> patients(10, 200);
  for (int seed = 0; seed < 50; ++seed) {
    auto cfg = small_config(seed, patients(rng));
    cfg.min_images_per_patient = 1;
    cfg.max_images_per_patient = 3;
    const auto m = generate_manifest(cfg, SynonymLexicon::builtin());
    std::map<std::uint64_t, std::set<Split>> seen;
    for (const auto& e : m.entries) seen[e.record.patient_id].insert(e.split);
    ASSERT_EQ(seen.size(), cfg.n_patients);
    std::size_t count[3] = {0, 0, 0};
    for (const auto& [pid, splits] : seen) {
      ASSERT_EQ(splits.size(), 1u) << "patient " << pid << " spans splits";
      ++count[static_cast<int>(*splits.begin())];
    }
    const double n = static_cast<double>(cfg.n_patients);
    EXPECT_LT(std::abs(count[0] - 0.8 * n), 1.0);
    EXPECT_LT(std::abs(count[1] - 0.1 * n), 1.0);
    EXPECT_LT(std::abs(count[2] - 0.1 * n), 1.0);
    const auto c = m.counts();
    for (int s = 0; s < 3; ++s) EXPECT_EQ(c.patients[s], count[s]);
    EXPECT_EQ(c.images[0] + c.images[1] + c.images[2], m.entries.size());
  }
}

TEST(Corpus, TinyPatientCounts) {
  const auto three = assign_splits(3, 1);
  EXPECT_EQ(std::set<Split>(three.begin(), three.end()).size(), 3u);
  EXPECT_THROW(assign_splits(2, 1), ConfigError);
  EXPECT_THROW(generate_manifest(small_config(1, 2), SynonymLexicon::builtin()), ConfigError);
  auto bad = small_config(1);
  bad.min_images_per_patient = 5;
  bad.max_images_per_patient = 4;
  EXPECT_THROW(generate_manifest(bad, SynonymLexicon::builtin()), ConfigError);
}

TEST(Corpus, StageMarginalsFollowConfiguration) {
  auto cfg = small_config(6, 200);
  cfg.min_images_per_patient = 10;
  cfg.max_images_per_patient = 16;
  for (const auto& probs : {std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3}, std::array<double, 3>{0.5, 0.3, 0.2}}) {
    cfg.stage_probabilities = probs;
    const auto m = generate_manifest(cfg, SynonymLexicon::builtin());
    double counts[3] = {0, 0, 0};
    for (const auto& e : m.entries) counts[e.record.stage - 1] += 1;
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(counts[s] / m.entries.size(), probs[s], 0.10 * probs[s]);
  }
}

TEST(Corpus, EveryCellReachable) {
  const auto m = generate_manifest(small_config(7, 200), SynonymLexicon::builtin());
  std::set<std::pair<int, int>> stage_region;
  std::set<int> genders, ethnicities;
  for (const auto& e : m.entries) {
    stage_region.insert({e.record.stage, static_cast<int>(e.record.region)});
    genders.insert(static_cast<int>(e.record.gender));
    ethnicities.insert(static_cast<int>(e.record.ethnicity));
  }
  EXPECT_EQ(stage_region.size(), 18u);
  EXPECT_EQ(genders.size(), 2u);
  EXPECT_EQ(ethnicities.size(), 5u);
}

TEST(Corpus, PaperScalePresetIsNear687Images) {
  const auto m = generate_manifest(CorpusConfig::paper_scale(), SynonymLexicon::builtin());
  EXPECT_EQ(m.counts().patients[0] + m.counts().patients[1] + m.counts().patients[2], 45u);
  EXPECT_NEAR(static_cast<double>(m.entries.size()), 687.0, 687.0 * 0.1);
}

TEST(Corpus, RegenerationIsByteIdentical) {
  ScratchDir a("corpus_a"), b("corpus_b");
  const auto cfg = small_config(8, 6);
  write_corpus(a.path().string(), generate_corpus(cfg, SynonymLexicon::builtin()));
  write_corpus(b.path().string(), generate_corpus(cfg, SynonymLexicon::builtin()));
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    EXPECT_EQ(bin::read_file(entry.path().string()), bin::read_file((b.path() / rel).string())) << rel;
    ++files;
  }
  EXPECT_GT(files, 6u);
}

TEST(Storage, CorpusRoundTrip) {
  ScratchDir dir("corpus");
  const auto corpus = generate_corpus(small_config(9, 5), SynonymLexicon::builtin());
  write_corpus(dir.path().string(), corpus);
  const auto back = read_corpus(dir.path().string());
  EXPECT_EQ(back.manifest, corpus.manifest);
  EXPECT_EQ(back.images, corpus.images);
}

TEST(Storage, PngRoundTripAndQuantization) {
  ScratchDir dir("png");
  std::mt19937_64 rng(10);
  const auto g = testing::random_gray(13, 21, rng);
  write_png(dir.file("x.png"), g);
  EXPECT_EQ(read_png(dir.file("x.png")), g);
  EXPECT_EQ(quantize(to_tensor(g)), g);
  EXPECT_THROW(read_png(dir.file("missing.png")), Error);
}

TEST(Storage, MalformedManifestReportsLine) {
  ScratchDir dir("manifest");
  const auto m = generate_manifest(small_config(11, 3), SynonymLexicon::builtin());
  write_manifest(dir.file("m.jsonl"), m);
  EXPECT_EQ(read_manifest(dir.file("m.jsonl")), m);
  std::size_t lines = 0;
  {
    std::ifstream in(dir.file("m.jsonl"));
    for (std::string l; std::getline(in, l);) ++lines;
  }
  {
    std::ofstream out(dir.file("m.jsonl"), std::ios::app);
    out << "{\"image_id\": \"oops\"}\n";
  }
  try {
    read_manifest(dir.file("m.jsonl"));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line " + std::to_string(lines + 1)), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------- annotators

TEST(Annotators, MajorityVoteWithTieBreak) {
  EXPECT_EQ(majority_vote({1, 1, 3}), 1);
  EXPECT_EQ(majority_vote({2, 3, 2}), 2);
  EXPECT_EQ(majority_vote({1, 3, 3}), 3);
  EXPECT_EQ(majority_vote({1, 2, 3}), 3);
  EXPECT_EQ(majority_vote({3, 1, 2}), 2);
}

TEST(Annotators, PerfectReliabilityReproducesTruth) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto r = testing::random_record(rng);
    const auto a = simulate_annotators(i, r, {1.0, 1.0, 1.0}, rng);
    EXPECT_EQ(a.labels, (std::array<int, 3>{r.stage, r.stage, r.stage}));
    EXPECT_EQ(a.resolved, r.stage);
    EXPECT_EQ(a.image_id, static_cast<std::uint64_t>(i));
  }
}

TEST(Annotators, ReliabilityOutsideRangeIsRejected) {
  std::mt19937_64 rng(13);
  EXPECT_THROW(simulate_annotators(0, PatientRecord{}, {0.3, 0.7, 0.9}, rng), RangeError);
  EXPECT_THROW(simulate_annotators(0, PatientRecord{}, {0.6, 1.1, 0.9}, rng), RangeError);
}

TEST(Annotators, PairwiseKappaMatchesClosedForm) {
  // Uniform true stages and symmetric errors keep every marginal at 1/3, so
  // p_e = 1/3 and p_o = r_a r_b + (1 - r_a)(1 - r_b) / 2.
  const std::array<double, 3> rel = {0.6, 0.7, 0.9};
  std::mt19937_64 rng(14);
  std::array<std::vector<int>, 3> labels;
  for (int i = 0; i < 5000; ++i) {
    PatientRecord r;
    r.stage = 1 + i % 3;
    const auto a = simulate_annotators(i, r, rel, rng);
    for (int k = 0; k < 3; ++k) labels[k].push_back(a.labels[k]);
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      const double po = rel[a] * rel[b] + (1 - rel[a]) * (1 - rel[b]) / 2.0;
      const double expect = (po - 1.0 / 3.0) / (2.0 / 3.0);
      double agree = 0;
      std::array<double, 3> ma{}, mb{};
      for (std::size_t i = 0; i < labels[a].size(); ++i) {
        agree += labels[a][i] == labels[b][i];
        ma[labels[a][i] - 1] += 1;
        mb[labels[b][i] - 1] += 1;
      }
      const double n = static_cast<double>(labels[a].size());
      const double pe = (ma[0] * mb[0] + ma[1] * mb[1] + ma[2] * mb[2]) / (n * n);
      const double kappa = (agree / n - pe) / (1 - pe);
      EXPECT_NEAR(kappa, expect, 0.05) << a << "," << b;
    }
}

}  // namespace
}  // namespace radsearch
