#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "venuerank/errors.hpp"
#include "venuerank/recmodel.hpp"

using namespace venuerank;

namespace {

struct Fixture {
  SynthCorpus corpus;
  CorpusSplit split;
};

Fixture small_corpus(std::size_t venues, std::size_t docs, double signal, std::uint64_t seed) {
  SynthOptions so;
  so.n_venues = venues;
  so.docs_per_venue = docs;
  so.vocab_size = std::max<std::size_t>(200, 10 * venues);
  so.signal_strength = signal;
  so.seed = seed;
  Fixture f{synth_corpus(so), {}};
  f.split = split_corpus(f.corpus.documents, {{0.6, 0.2, 0.2}, seed, true});
  return f;
}

ModelConfig tiny(Variant v, const std::string& combo = "TAKS") {
  ModelConfig c = ModelConfig::desk(v);
  c.combo = FeatureCombo::parse(combo);
  c.encoder.embed_dim = 8;
  c.encoder.filters = 6;
  c.encoder.units = 6;
  c.head.main = {{16, true, 0.2}, {12, true, 0.2}};
  if (v == Variant::baseline) c.head.main.push_back({10, true, 0.2});
  c.head.similarity = {{16, 12, 8}, 0.4};
  c.head.joint = {{8, true, 0.3}};
  c.embed.trainable = true;
  return c;
}

std::vector<double> param_bytes(const nn::ParamStore& p) {
  std::vector<double> out;
  for (const auto& x : p.all()) out.insert(out.end(), x.value.values().begin(), x.value.values().end());
  return out;
}

}  // namespace

TEST(BuildModel, ConcatWidths) {
  ModelConfig mk = ModelConfig::defaults(Variant::multikernel);
  mk.combo = FeatureCombo::parse("TAKS");
  mk.n_venues = 351;
  EXPECT_EQ(mk.encoder.embed_dim, 768u);
  EXPECT_EQ(concat_width(mk), 951u);

  ModelConfig rec = ModelConfig::defaults(Variant::recurrent);
  rec.encoder.kind = EncoderKind::bigru;
  rec.combo = FeatureCombo::parse("TAK");
  rec.n_venues = 351;
  EXPECT_EQ(concat_width(rec), 200u);
}

TEST(BuildModel, FullScaleHeadDefaults) {
  const auto rec = ModelConfig::defaults(Variant::recurrent);
  EXPECT_EQ(rec.encoder.units, 100u);
  EXPECT_EQ(rec.head.similarity.widths, (std::vector<std::size_t>{1500, 1000, 500}));
  EXPECT_EQ(rec.head.similarity.dropout, 0.4);
  ASSERT_EQ(rec.head.joint.size(), 1u);
  EXPECT_EQ(rec.head.joint[0].width, 500u);
  EXPECT_EQ(rec.head.joint[0].dropout, 0.3);
  const auto mk = ModelConfig::defaults(Variant::multikernel);
  EXPECT_EQ(mk.encoder.filters, 200u);
  EXPECT_EQ(mk.encoder.kernel_sizes, (std::vector<std::size_t>{2, 3, 4}));
  ASSERT_EQ(mk.head.main.size(), 2u);
  EXPECT_EQ(mk.head.main[0].width, 500u);
  EXPECT_EQ(mk.head.main[1].width, 400u);
  EXPECT_EQ(mk.head.main[1].dropout, 0.2);
}

TEST(BuildModel, DeterministicInit) {
  const auto f = small_corpus(4, 10, 0.9, 1);
  for (auto v : {Variant::baseline, Variant::recurrent, Variant::multikernel}) {
    const auto a = build_model(tiny(v), f.corpus.venues, f.split.train, 7);
    const auto b = build_model(tiny(v), f.corpus.venues, f.split.train, 7);
    EXPECT_EQ(param_bytes(a.params), param_bytes(b.params));
    const auto c = build_model(tiny(v), f.corpus.venues, f.split.train, 8);
    EXPECT_NE(param_bytes(a.params), param_bytes(c.params));
  }
}

TEST(BuildModel, ScopeOffAllocatesNoSimilarityAndKeepsMainShapes) {
  const auto f = small_corpus(4, 10, 0.9, 1);
  const auto on = build_model(tiny(Variant::recurrent, "TAKS"), f.corpus.venues, f.split.train, 1);
  const auto off = build_model(tiny(Variant::recurrent, "TAK"), f.corpus.venues, f.split.train, 1);
  for (const auto& p : off.params.all()) {
    EXPECT_FALSE(p.name.starts_with("simflow")) << p.name;
    EXPECT_FALSE(p.name.starts_with("joint")) << p.name;
    EXPECT_FALSE(p.name.starts_with("scope")) << p.name;
  }
  for (const auto& p : off.params.all()) {
    if (p.name.starts_with("main") || p.name.starts_with("encoder")) {
      ASSERT_TRUE(on.params.contains(p.name)) << p.name;
      EXPECT_EQ(on.params.get(p.name).value.shape(), p.value.shape()) << p.name;
    }
  }
}

TEST(BuildModel, InvalidConfigs) {
  ModelConfig c = tiny(Variant::baseline);
  c.encoder.kind = EncoderKind::gru;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(Variant::multikernel);
  c.head.main[0].width = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, InitialLossNearLogN) {
  const auto f = small_corpus(8, 20, 0.9, 2);
  auto model = build_model(tiny(Variant::multikernel), f.corpus.venues, f.split.train, 3);
  model.config.train.epochs = 1;
  train(model, f.split);
  ASSERT_TRUE(model.initial_train_loss.has_value());
  EXPECT_NEAR(*model.initial_train_loss, std::log(8.0), 0.2 * std::log(8.0));
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const auto f = small_corpus(4, 10, 0.9, 2);
  auto model = build_model(tiny(Variant::recurrent), f.corpus.venues, f.split.train, 3);
  model.config.train.epochs = 1;
  model.config.train.optimizer.learning_rate = 0.0;
  const auto before = param_bytes(model.params);
  train(model, f.split);
  EXPECT_EQ(param_bytes(model.params), before);
}

TEST(Train, DeterministicUnderSeed) {
  const auto f = small_corpus(4, 12, 0.9, 4);
  auto run = [&] {
    auto m = build_model(tiny(Variant::multikernel), f.corpus.venues, f.split.train, 5);
    m.config.train.epochs = 3;
    train(m, f.split);
    return param_bytes(m.params);
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, FitsPlantedSignal) {
  const auto f = small_corpus(5, 30, 0.95, 6);
  auto model = build_model(tiny(Variant::multikernel), f.corpus.venues, f.split.train, 6);
  model.config.train.optimizer.learning_rate = 5e-3;
  train(model, f.split);
  EXPECT_GE(top1_accuracy(model, f.split.train), 0.95);
  EXPECT_FALSE(model.history.empty());
}

TEST(Train, EmptySplitIsAnError) {
  const auto f = small_corpus(4, 10, 0.9, 2);
  auto model = build_model(tiny(Variant::multikernel), f.corpus.venues, f.split.train, 3);
  CorpusSplit empty;
  EXPECT_THROW(train(model, empty), ConfigError);
}

TEST(Predict, FullRankingIsADistribution) {
  const auto f = small_corpus(6, 10, 0.9, 3);
  for (auto v : {Variant::baseline, Variant::recurrent, Variant::multikernel}) {
    const auto model = build_model(tiny(v), f.corpus.venues, f.split.train, 2);
    for (const auto& doc : f.split.test) {
      const auto p = predict_topk(model, doc, 6);
      ASSERT_EQ(p.ranked.size(), 6u);
      double sum = 0.0;
      for (std::size_t i = 0; i < p.ranked.size(); ++i) {
        sum += p.ranked[i].probability;
        EXPECT_GT(p.ranked[i].probability, 0.0);
        EXPECT_LT(p.ranked[i].probability, 1.0);
        EXPECT_TRUE(p.ranked[i].scope_score.has_value());
        if (i > 0) EXPECT_GE(p.ranked[i - 1].probability, p.ranked[i].probability);
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
      EXPECT_EQ(predict_topk(model, doc, 2).ranked.size(), 2u);
    }
    EXPECT_THROW(predict_topk(model, f.split.test[0], 0), ConfigError);
    EXPECT_THROW(predict_topk(model, f.split.test[0], 7), ConfigError);
    EXPECT_THROW(predict_topk(model, Document{"x", "the of", "", {}, {}}, 1), EmptyTextError);
  }
}

TEST(Predict, TiesBreakByVenueId) {
  const auto f = small_corpus(5, 10, 0.9, 3);
  auto model = build_model(tiny(Variant::multikernel), f.corpus.venues, f.split.train, 2);
  for (auto& v : model.params.get("output.0.W").value.values()) v = 0.0;
  for (auto& v : model.params.get("output.0.b").value.values()) v = 0.0;
  std::reverse(model.venues.begin(), model.venues.end());
  const auto p = predict_topk(model, f.split.test[0], 5);
  for (std::size_t i = 1; i < p.ranked.size(); ++i) EXPECT_LT(p.ranked[i - 1].venue_id, p.ranked[i].venue_id);
}

TEST(Predict, InvariantToTrailingPadding) {
  const auto f = small_corpus(4, 10, 0.9, 3);
  for (auto v : {Variant::baseline, Variant::recurrent, Variant::multikernel}) {
    const auto model = build_model(tiny(v), f.corpus.venues, f.split.train, 4);
    const Predictor pred(std::make_shared<const TrainedModel>(model));
    const auto seq = encode_document(model, f.split.test[0]);
    TokenSequence longer = seq;
    longer.ids.resize(seq.max_len + 40, Vocab::kPad);
    longer.mask.resize(seq.max_len + 40, 0);
    longer.max_len = seq.max_len + 40;
    EXPECT_EQ(pred.probabilities(seq), pred.probabilities(longer)) << to_string(v);
  }
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto f = small_corpus(4, 12, 0.9, 5);
  for (auto v : {Variant::baseline, Variant::recurrent, Variant::multikernel}) {
    for (const char* combo : {"TAK", "TAKS"}) {
      auto model = build_model(tiny(v, combo), f.corpus.venues, f.split.train, 6);
      model.config.train.epochs = 2;
      train(model, f.split);
      std::stringstream ss;
      save_model(model, ss);
      const auto back = load_model(ss);
      EXPECT_EQ(back.vocab, model.vocab);
      EXPECT_EQ(back.venues, model.venues);
      EXPECT_EQ(param_bytes(back.params), param_bytes(model.params));
      for (const auto& doc : f.split.test) {
        const auto a = predict_topk(model, doc, 4), b = predict_topk(back, doc, 4);
        for (std::size_t i = 0; i < 4; ++i) {
          EXPECT_EQ(a.ranked[i].venue_id, b.ranked[i].venue_id);
          EXPECT_EQ(a.ranked[i].probability, b.ranked[i].probability);
        }
      }
    }
  }
}

TEST(Checkpoint, ConfigJsonRoundTrip) {
  for (auto v : {Variant::baseline, Variant::recurrent, Variant::multikernel}) {
    const auto c = ModelConfig::defaults(v);
    EXPECT_EQ(to_json(model_config_from_json(to_json(c))), to_json(c));
  }
}

TEST(Checkpoint, CorruptInputRejected) {
  std::istringstream junk("not a checkpoint");
  EXPECT_THROW(load_model(junk), std::exception);
}

TEST(GradCheck, EveryArchitecture) {
  for (auto v : {Variant::baseline, Variant::recurrent, Variant::multikernel}) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      const auto check = grad_check_architecture(v, seed);
      EXPECT_TRUE(check.report.passes(1e-4)) << check.label << " seed " << seed << " worst "
                                             << check.report.worst();
      EXPECT_GT(check.report.entries_checked, 0u);
    }
  }
}
