#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "venuerank/errors.hpp"
#include "venuerank/evalharness.hpp"

using namespace venuerank;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kAbc{"a", "b", "c"};

// Four samples over three classes; confusion counts enumerated by hand.
const std::vector<Ranking> kHandRankings{{"a", "b", "c"}, {"a", "c", "b"}, {"c", "a", "b"}, {"b", "a", "c"}};
const std::vector<std::string> kHandLabels{"a", "b", "c", "a"};

std::vector<std::string> classes(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

Ranking random_ranking(const std::vector<std::string>& cls, Rng& rng) {
  Ranking r = cls;
  rng.shuffle(r);
  return r;
}

EvalReport fake_report(const std::vector<std::string>& kinds) {
  EvalReport r;
  r.corpus_id = "abc123";
  r.seed = 4;
  r.created_at = "2026-01-01T00:00:00Z";
  double x = 0.1;
  for (const auto& kind : kinds) {
    for (const auto& combo : FeatureCombo::canonical()) {
      CellMetrics m;
      for (std::size_t i = 0; i < 4; ++i) {
        m.hitrate[i] = std::min(1.0, x + 0.1 * static_cast<double>(i));
        m.macro[i] = 0.5 + 0.01 * static_cast<double>(i);
      }
      m.test_documents = 20;
      x = std::fmod(x + 0.037, 0.6);
      r.cells.push_back({kind, combo.code(), m, ""});
    }
  }
  return r;
}

}  // namespace

TEST(Hitrate, Examples) {
  EXPECT_EQ(hitrate_at_k({{"a", "b"}, {"b", "c"}}, {"b", "b"}, 1), 0.5);
  EXPECT_EQ(hitrate_at_k(kHandRankings, kHandLabels, 3), 1.0);
  EXPECT_EQ(hitrate_at_k(kHandRankings, kHandLabels, 1), 0.5);
  EXPECT_EQ(hitrate_at_k(kHandRankings, kHandLabels, 2), 0.75);
}

TEST(Hitrate, Errors) {
  EXPECT_THROW(hitrate_at_k({{"a"}}, {"a", "b"}, 1), ConfigError);
  EXPECT_THROW(hitrate_at_k({}, {}, 1), ConfigError);
  EXPECT_THROW(hitrate_at_k({{"a"}}, {"a"}, 0), ConfigError);
  EXPECT_THROW(hitrate_at_k({{"a"}}, {"a"}, 2), ConfigError);
}

TEST(Hitrate, MatchesMembershipOracle) {
  Rng rng(31);
  const auto cls = classes(10);
  std::vector<Ranking> preds;
  std::vector<std::string> labels;
  for (int i = 0; i < 200; ++i) {
    preds.push_back(random_ranking(cls, rng));
    labels.push_back(cls[rng.index(cls.size())]);
  }
  double prev = 0.0;
  for (std::size_t k = 1; k <= 10; ++k) {
    const double h = hitrate_at_k(preds, labels, k);
    EXPECT_EQ(h, oracle::hitrate(preds, labels, k));
    EXPECT_GE(h, prev);
    prev = h;
  }
  EXPECT_EQ(prev, 1.0);
}

TEST(Hitrate, JointPermutationInvariant) {
  Rng rng(32);
  const auto cls = classes(6);
  std::vector<std::size_t> order(50);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Ranking> preds;
  std::vector<std::string> labels;
  for (int i = 0; i < 50; ++i) {
    preds.push_back(random_ranking(cls, rng));
    labels.push_back(cls[rng.index(6)]);
  }
  rng.shuffle(order);
  std::vector<Ranking> p2;
  std::vector<std::string> l2;
  for (auto i : order) {
    p2.push_back(preds[i]);
    l2.push_back(labels[i]);
  }
  for (std::size_t k = 1; k <= 6; ++k) EXPECT_EQ(hitrate_at_k(preds, labels, k), hitrate_at_k(p2, l2, k));
}

TEST(Macro, HandEnumeratedFixture) {
  // k=1: a (TP1 FP1 FN1 TN1) 0.5, b (TP0 FP1 FN1 TN2) 0.5, c (TP1 TN3) 1.0.
  EXPECT_DOUBLE_EQ(macro_accuracy_at_k(kHandRankings, kHandLabels, 1, kAbc), 2.0 / 3.0);
  // k=2: a (TP2 FP2) 0.5, b (FP2 FN1 TN1) 0.25, c (TP1 FP1 TN2) 0.75.
  EXPECT_DOUBLE_EQ(macro_accuracy_at_k(kHandRankings, kHandLabels, 2, kAbc), 0.5);
  const auto conf = oracle::confusion_at_k(kHandRankings, kHandLabels, 1, kAbc);
  EXPECT_EQ(conf[0].tp, 1u);
  EXPECT_EQ(conf[0].tn, 1u);
  EXPECT_EQ(conf[1].tn, 2u);
  EXPECT_EQ(conf[2].tn, 3u);
}

TEST(Macro, PerfectTopOne) {
  EXPECT_EQ(macro_accuracy_at_k({{"a", "b", "c"}, {"b", "a", "c"}, {"c", "a", "b"}}, {"a", "b", "c"}, 1, kAbc), 1.0);
  EXPECT_EQ(hitrate_at_k({{"a", "b", "c"}, {"b", "a", "c"}, {"c", "a", "b"}}, {"a", "b", "c"}, 1), 1.0);
}

TEST(Macro, KEqualsNGivesMeanPrevalence) {
  Rng rng(33);
  for (std::size_t n : {2u, 3u, 7u, 10u}) {
    const auto cls = classes(n);
    std::vector<Ranking> preds;
    std::vector<std::string> labels;
    for (int i = 0; i < 40; ++i) {
      preds.push_back(random_ranking(cls, rng));
      labels.push_back(cls[rng.index(n)]);
    }
    double mean_prevalence = 0.0;
    for (const auto& c : cls) {
      mean_prevalence += static_cast<double>(std::count(labels.begin(), labels.end(), c)) / 40.0;
    }
    mean_prevalence /= static_cast<double>(n);
    EXPECT_NEAR(macro_accuracy_at_k(preds, labels, n, cls), mean_prevalence, 1e-15);
    EXPECT_NEAR(mean_prevalence, 1.0 / static_cast<double>(n), 1e-15);
  }
}

TEST(Macro, MatchesOracleOnRandomInstances) {
  Rng rng(34);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.index(9), samples = 1 + rng.index(30), k = 1 + rng.index(n);
    const auto cls = classes(n);
    std::vector<Ranking> preds;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < samples; ++i) {
      preds.push_back(random_ranking(cls, rng));
      labels.push_back(cls[rng.index(n)]);
    }
    const double expected = oracle::macro_accuracy(oracle::confusion_at_k(preds, labels, k, cls));
    ASSERT_NEAR(macro_accuracy_at_k(preds, labels, k, cls), expected, 1e-12);
    ASSERT_EQ(hitrate_at_k(preds, labels, k), oracle::hitrate(preds, labels, k));
  }
}

TEST(Macro, CoincidesWithHitrateForTwoClassesAtK1) {
  const std::vector<std::string> ab{"a", "b"};
  for (int labels_bits = 0; labels_bits < 16; ++labels_bits) {
    for (int pred_bits = 0; pred_bits < 16; ++pred_bits) {
      std::vector<Ranking> preds;
      std::vector<std::string> labels;
      for (int i = 0; i < 4; ++i) {
        labels.push_back((labels_bits >> i) & 1 ? "b" : "a");
        preds.push_back((pred_bits >> i) & 1 ? Ranking{"b", "a"} : Ranking{"a", "b"});
      }
      EXPECT_DOUBLE_EQ(macro_accuracy_at_k(preds, labels, 1, ab), hitrate_at_k(preds, labels, 1));
    }
  }
}

TEST(Report, MarkdownHasOneRowPerCombo) {
  const auto md = render_report(fake_report({"multikernel"}), ReportFormat::markdown);
  std::istringstream in(md);
  std::string line;
  std::size_t rows = 0;
  bool in_first = false, done = false;
  while (std::getline(in, line) && !done) {
    if (line.starts_with("| Combo")) {
      in_first = true;
      continue;
    }
    if (in_first) {
      if (line.starts_with("|---")) continue;
      if (line.starts_with("|")) {
        ++rows;
      } else {
        done = true;
      }
    }
  }
  EXPECT_EQ(rows, 14u);
  EXPECT_NE(md.find("**"), std::string::npos);
}

TEST(Report, EmptyReportNotesNoCells) {
  EvalReport empty;
  const auto md = render_report(empty, ReportFormat::markdown);
  EXPECT_NE(md.find("| Combo"), std::string::npos);
  EXPECT_NE(md.find("no cells"), std::string::npos);
  const auto csv = render_report(empty, ReportFormat::csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
}

TEST(Report, JsonRoundTrip) {
  auto r = fake_report({"baseline", "gru"});
  r.cells[3].metrics.reset();
  r.cells[3].error = "training diverged";
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  EXPECT_EQ(report_to_json(r)["schema_version"], EvalReport::kSchemaVersion);
}

TEST(Report, CsvShape) {
  const auto csv = render_report(fake_report({"baseline"}), ReportFormat::csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 14);
}

TEST(Report, EmitToUnwritablePathThrows) {
  EXPECT_THROW(emit_report(EvalReport{}, ReportFormat::json, "/nonexistent-dir/x/report.json"), std::runtime_error);
}

class AblationTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthOptions so;
    so.n_venues = 4;
    so.docs_per_venue = 15;
    so.vocab_size = 200;
    so.signal_strength = 0.9;
    so.seed = 12;
    corpus_ = synth_corpus(so);
    split_ = split_corpus(corpus_.documents, {{0.6, 0.2, 0.2}, 12, true});
    options_.seed = 12;
    options_.adjust = [](ModelConfig& c) {
      c.encoder.embed_dim = 8;
      c.encoder.filters = 4;
      c.encoder.units = 4;
      for (auto& b : c.head.main) b.width = 8;
      c.head.similarity.widths = {8, 8, 8};
      for (auto& b : c.head.joint) b.width = 8;
      c.train.epochs = 2;
    };
  }

  SynthCorpus corpus_;
  CorpusSplit split_;
  AblationOptions options_;
};

TEST_F(AblationTest, CardinalityAndRanges) {
  std::vector<FeatureCombo> combos;
  for (const char* c : {"T", "TS", "TAK", "TAKS"}) combos.push_back(FeatureCombo::parse(c));
  const auto report = ablation_run(split_, corpus_.venues, {"baseline", "gru"}, combos, options_);
  ASSERT_EQ(report.cells.size(), 8u);
  for (const auto& cell : report.cells) {
    ASSERT_TRUE(cell.metrics.has_value()) << cell.kind << " " << cell.combo << " " << cell.error;
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GE(cell.metrics->hitrate[i], 0.0);
      EXPECT_LE(cell.metrics->hitrate[i], 1.0);
      EXPECT_GE(cell.metrics->macro[i], 0.0);
      EXPECT_LE(cell.metrics->macro[i], 1.0);
      if (i > 0) EXPECT_GE(cell.metrics->hitrate[i], cell.metrics->hitrate[i - 1]);
    }
  }
}

TEST_F(AblationTest, DeterministicAndCached) {
  const std::vector<FeatureCombo> combos{FeatureCombo::parse("K"), FeatureCombo::parse("KS")};
  const auto a = ablation_run(split_, corpus_.venues, {"multikernel"}, combos, options_);
  const auto b = ablation_run(split_, corpus_.venues, {"multikernel"}, combos, options_);
  EXPECT_EQ(a.cells, b.cells);

  const fs::path cache = fs::temp_directory_path() / "venuerank-ablation-cache-test";
  fs::remove_all(cache);
  auto cached = options_;
  cached.cache_dir = cache;
  const auto first = ablation_run(split_, corpus_.venues, {"multikernel"}, combos, cached);
  EXPECT_EQ(first.cells, a.cells);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(cache)) files += e.path().extension() == ".json";
  EXPECT_EQ(files, 2u);
  // Edit one cached cell; a resumed run must read it back instead of retraining.
  for (const auto& e : fs::directory_iterator(cache)) {
    std::ifstream in(e.path());
    auto j = nlohmann::json::parse(in);
    in.close();
    j["test_documents"] = 12345;
    std::ofstream(e.path()) << j.dump();
    break;
  }
  const auto resumed = ablation_run(split_, corpus_.venues, {"multikernel"}, combos, cached);
  ASSERT_EQ(resumed.cells.size(), 2u);
  EXPECT_TRUE(resumed.cells[0].metrics->test_documents == 12345 || resumed.cells[1].metrics->test_documents == 12345);
  fs::remove_all(cache);
}

TEST_F(AblationTest, FailingCellIsRecorded) {
  auto opts = options_;
  opts.adjust = [inner = options_.adjust](ModelConfig& c) {
    inner(c);
    if (c.combo.code() == "T") c.head.main[0].width = 0;
  };
  const auto report = ablation_run(split_, corpus_.venues, {"baseline"},
                                   {FeatureCombo::parse("T"), FeatureCombo::parse("K")}, opts);
  ASSERT_EQ(report.cells.size(), 2u);
  EXPECT_FALSE(report.cells[0].metrics.has_value());
  EXPECT_FALSE(report.cells[0].error.empty());
  EXPECT_TRUE(report.cells[1].metrics.has_value());
}

TEST_F(AblationTest, UnknownKindRejected) {
  EXPECT_THROW(ablation_run(split_, corpus_.venues, {"no-such-kind"}, {FeatureCombo::parse("T")}, options_),
               ConfigError);
}
