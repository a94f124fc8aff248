#include "venuerank/recmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "venuerank/checkpoint.hpp"
#include "venuerank/errors.hpp"

namespace venuerank {

using nlohmann::json;
using nn::DenseBlockSpec;
using nn::Tensor;

// --- enums -------------------------------------------------------------------

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::recurrent: return "recurrent";
    case Variant::multikernel: return "multikernel";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "recurrent") return Variant::recurrent;
  if (s == "multikernel") return Variant::multikernel;
  throw ConfigError("unknown variant '" + s + "' (expected baseline, recurrent or multikernel)");
}

std::string to_string(ScopeMode m) {
  return m == ScopeMode::siamese ? "siamese" : "frozen_centroid";
}

ScopeMode scope_mode_from_string(const std::string& s) {
  if (s == "siamese") return ScopeMode::siamese;
  if (s == "frozen_centroid") return ScopeMode::frozen_centroid;
  throw ConfigError("unknown scope mode '" + s + "'");
}

// --- config ------------------------------------------------------------------

namespace {

std::vector<DenseBlockSpec> blocks(std::initializer_list<std::size_t> widths, double rate) {
  std::vector<DenseBlockSpec> out;
  for (auto w : widths) out.push_back({w, true, rate});
  return out;
}

}  // namespace

ModelConfig ModelConfig::defaults(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  switch (variant) {
    case Variant::baseline:
      c.encoder.kind = EncoderKind::conv1d_single;
      c.encoder.filters = 200;
      c.encoder.kernel_size = 3;
      c.encoder.embed_dim = 300;
      c.head.main = blocks({512, 256, 128}, 0.2);
      c.scope_mode = ScopeMode::frozen_centroid;
      c.embed.trainable = false;
      c.pipeline = {PipelineKind::baseline, true};
      break;
    case Variant::recurrent:
      c.encoder.kind = EncoderKind::gru;
      c.encoder.units = 100;
      c.encoder.embed_dim = 300;
      c.head.main = blocks({512, 256}, 0.2);
      c.head.similarity = {{1500, 1000, 500}, 0.4};
      c.head.joint = blocks({500}, 0.3);
      c.scope_mode = ScopeMode::frozen_centroid;
      c.embed.trainable = false;
      c.pipeline = {PipelineKind::enhanced, true};
      break;
    case Variant::multikernel:
      c.encoder.kind = EncoderKind::multikernel_conv;
      c.encoder.filters = 200;
      c.encoder.kernel_sizes = {2, 3, 4};
      c.encoder.embed_dim = 768;
      c.head.main = blocks({500, 400}, 0.2);
      c.scope_mode = ScopeMode::siamese;
      c.embed.trainable = true;
      c.pipeline = {PipelineKind::latex, false};
      break;
  }
  return c;
}

ModelConfig ModelConfig::desk(Variant variant) {
  ModelConfig c = defaults(variant);
  switch (variant) {
    case Variant::baseline:
      c.encoder.filters = 32;
      c.encoder.embed_dim = 24;
      c.head.main = blocks({64, 48, 32}, 0.2);
      break;
    case Variant::recurrent:
      c.encoder.units = 24;
      c.encoder.embed_dim = 24;
      c.head.main = blocks({64, 32}, 0.2);
      c.head.similarity = {{96, 64, 32}, 0.4};
      c.head.joint = blocks({32}, 0.3);
      break;
    case Variant::multikernel:
      c.encoder.filters = 32;
      c.encoder.embed_dim = 24;
      c.head.main = blocks({64, 48}, 0.2);
      break;
  }
  c.train.epochs = 30;
  c.train.batch_size = 16;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  combo.validate();
  const bool kind_ok =
      (variant == Variant::baseline && encoder.kind == EncoderKind::conv1d_single) ||
      (variant == Variant::recurrent && encoder.recurrent()) ||
      (variant == Variant::multikernel && encoder.kind == EncoderKind::multikernel_conv);
  if (!kind_ok) {
    throw ConfigError("encoder kind " + to_string(encoder.kind) + " does not fit variant " +
                      to_string(variant));
  }
  const std::size_t M = max_len();
  if (encoder.kind == EncoderKind::conv1d_single && encoder.kernel_size > M) {
    throw ConfigError("kernel size exceeds max length " + std::to_string(M));
  }
  for (auto k : encoder.kernel_sizes) {
    if (encoder.kind == EncoderKind::multikernel_conv && k > M) {
      throw ConfigError("kernel size " + std::to_string(k) + " exceeds max length " + std::to_string(M));
    }
  }
  auto check_blocks = [](const std::vector<DenseBlockSpec>& bs, const char* what, bool required) {
    if (required && bs.empty()) throw ConfigError(std::string("head.") + what + " needs at least one block");
    for (const auto& b : bs) {
      if (b.width == 0) throw ConfigError(std::string("head.") + what + ": widths must be positive");
      if (!(b.dropout >= 0.0 && b.dropout < 1.0)) {
        throw ConfigError(std::string("head.") + what + ": dropout must be in [0, 1)");
      }
    }
  };
  check_blocks(head.main, "main", true);
  if (variant == Variant::recurrent && combo.scope) {
    check_blocks(head.joint, "joint", true);
    if (head.similarity.widths.empty()) throw ConfigError("head.similarity needs at least one layer");
    for (auto w : head.similarity.widths) {
      if (w == 0) throw ConfigError("head.similarity: widths must be positive");
    }
    if (!(head.similarity.dropout >= 0.0 && head.similarity.dropout < 1.0)) {
      throw ConfigError("head.similarity: dropout must be in [0, 1)");
    }
  }
  if (n_venues < 2) throw ConfigError("at least two venues are required");
  if (train.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (train.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(train.optimizer.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(embed.init_scale > 0.0)) throw ConfigError("embed.init_scale must be positive");
  if (min_count == 0) throw ConfigError("min_count must be >= 1");
}

namespace {

json blocks_json(const std::vector<DenseBlockSpec>& bs) {
  json a = json::array();
  for (const auto& b : bs) a.push_back({{"width", b.width}, {"relu", b.relu}, {"dropout", b.dropout}});
  return a;
}

std::vector<DenseBlockSpec> blocks_from_json(const json& a) {
  std::vector<DenseBlockSpec> out;
  for (const auto& b : a) {
    out.push_back({b.at("width").get<std::size_t>(), b.value("relu", true), b.value("dropout", 0.0)});
  }
  return out;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {
      {"variant", to_string(c.variant)},
      {"encoder",
       {{"kind", to_string(c.encoder.kind)},
        {"units", c.encoder.units},
        {"filters", c.encoder.filters},
        {"kernel_size", c.encoder.kernel_size},
        {"kernel_sizes", c.encoder.kernel_sizes},
        {"embed_dim", c.encoder.embed_dim}}},
      {"combo", c.combo.code()},
      {"n_venues", c.n_venues},
      {"head",
       {{"main", blocks_json(c.head.main)},
        {"similarity", {{"widths", c.head.similarity.widths}, {"dropout", c.head.similarity.dropout}}},
        {"joint", blocks_json(c.head.joint)}}},
      {"embed",
       {{"pretrained_path", c.embed.pretrained_path},
        {"trainable", c.embed.trainable},
        {"init_scale", c.embed.init_scale}}},
      {"train",
       {{"optimizer", nn::to_string(c.train.optimizer.kind)},
        {"learning_rate", c.train.optimizer.learning_rate},
        {"beta1", c.train.optimizer.beta1},
        {"beta2", c.train.optimizer.beta2},
        {"epsilon", c.train.optimizer.epsilon},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"patience", c.train.patience},
        {"seed", c.train.seed}}},
      {"scope_mode", to_string(c.scope_mode)},
      {"zero_norm", c.zero_norm == ZeroNormPolicy::error ? "error" : "minus_one"},
      {"pipeline", c.pipeline.version()},
      {"min_count", c.min_count},
  };
}

ModelConfig model_config_from_json(const json& j) {
  try {
    const Variant variant = variant_from_string(j.value("variant", std::string("multikernel")));
    ModelConfig c = j.value("desk", false) ? ModelConfig::desk(variant) : ModelConfig::defaults(variant);
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      if (e.contains("kind")) c.encoder.kind = encoder_kind_from_string(e["kind"].get<std::string>());
      c.encoder.units = e.value("units", c.encoder.units);
      c.encoder.filters = e.value("filters", c.encoder.filters);
      c.encoder.kernel_size = e.value("kernel_size", c.encoder.kernel_size);
      c.encoder.kernel_sizes = e.value("kernel_sizes", c.encoder.kernel_sizes);
      c.encoder.embed_dim = e.value("embed_dim", c.encoder.embed_dim);
    }
    if (j.contains("combo")) c.combo = FeatureCombo::parse(j["combo"].get<std::string>());
    c.n_venues = j.value("n_venues", c.n_venues);
    if (j.contains("head")) {
      const auto& h = j["head"];
      if (h.contains("main")) c.head.main = blocks_from_json(h["main"]);
      if (h.contains("joint")) c.head.joint = blocks_from_json(h["joint"]);
      if (h.contains("similarity")) {
        c.head.similarity.widths = h["similarity"].value("widths", c.head.similarity.widths);
        c.head.similarity.dropout = h["similarity"].value("dropout", c.head.similarity.dropout);
      }
    }
    if (j.contains("embed")) {
      const auto& e = j["embed"];
      c.embed.pretrained_path = e.value("pretrained_path", c.embed.pretrained_path);
      c.embed.trainable = e.value("trainable", c.embed.trainable);
      c.embed.init_scale = e.value("init_scale", c.embed.init_scale);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("optimizer")) {
        c.train.optimizer.kind = nn::optimizer_kind_from_string(t["optimizer"].get<std::string>());
      }
      c.train.optimizer.learning_rate = t.value("learning_rate", c.train.optimizer.learning_rate);
      c.train.optimizer.beta1 = t.value("beta1", c.train.optimizer.beta1);
      c.train.optimizer.beta2 = t.value("beta2", c.train.optimizer.beta2);
      c.train.optimizer.epsilon = t.value("epsilon", c.train.optimizer.epsilon);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.patience = t.value("patience", c.train.patience);
      c.train.seed = t.value("seed", c.train.seed);
    }
    if (j.contains("scope_mode")) c.scope_mode = scope_mode_from_string(j["scope_mode"].get<std::string>());
    if (j.contains("zero_norm")) {
      const auto z = j["zero_norm"].get<std::string>();
      if (z == "error") {
        c.zero_norm = ZeroNormPolicy::error;
      } else if (z == "minus_one") {
        c.zero_norm = ZeroNormPolicy::minus_one;
      } else {
        throw ConfigError("zero_norm must be 'error' or 'minus_one'");
      }
    }
    if (j.contains("pipeline")) c.pipeline = Pipeline::from_version(j["pipeline"].get<std::string>());
    c.min_count = j.value("min_count", c.min_count);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

std::size_t concat_width(const ModelConfig& config) {
  const std::size_t w = feature_width(config.encoder);
  if (config.combo.scope && config.variant != Variant::recurrent) return w + config.n_venues;
  return w;
}

std::vector<std::string> TrainedModel::venue_ids() const {
  std::vector<std::string> out;
  for (const auto& v : venues) out.push_back(v.venue_id);
  return out;
}

// --- parameters ----------------------------------------------------------------

namespace {

constexpr const char* kEmbedding = "embedding";
constexpr const char* kScopeReprs = "scope.reprs";
constexpr const char* kModelKind = "venuerank-model";

bool scope_on(const ModelConfig& c) { return c.combo.scope; }

std::vector<TokenSequence> make_scope_sequences(const ModelConfig& config, const Vocab& vocab,
                                                const std::vector<VenueProfile>& venues) {
  std::vector<TokenSequence> out;
  if (!scope_on(config)) return out;
  for (const auto& v : venues) {
    auto tokens = config.pipeline.tokens(v.aims_scope);
    if (tokens.empty()) {
      if (config.zero_norm == ZeroNormPolicy::error) {
        throw EmptyTextError("venue '" + v.venue_id + "': scope text is empty after cleaning");
      }
      out.emplace_back();
      continue;
    }
    out.push_back(encode_pad(tokens, vocab, tokens.size(), false));
  }
  return out;
}

/// Mean of the embedding rows of a scope sequence; UNK positions count as zero.
void scope_mean(const Tensor& embedding, const TokenSequence& seq, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t L = seq.length();
  if (L == 0) return;
  const std::size_t d = out.size();
  for (std::size_t t = 0; t < L; ++t) {
    const auto id = seq.ids[t];
    if (id <= Vocab::kUnk) continue;
    auto row = embedding.row(static_cast<std::size_t>(id));
    for (std::size_t c = 0; c < d; ++c) out[c] += row[c];
  }
  for (auto& v : out) v /= static_cast<double>(L);
}

nn::ParamStore allocate(const ModelConfig& config, const Vocab& vocab,
                        const std::vector<VenueProfile>& venues, std::uint64_t seed,
                        const EmbeddingTable* pretrained) {
  Rng rng(seed);
  nn::ParamStore params;
  const std::size_t V = vocab.size();
  const std::size_t d = config.encoder.embed_dim;
  if (pretrained && pretrained->dim() != d) {
    throw ConfigError("pretrained vectors have dim " + std::to_string(pretrained->dim()) +
                      " but the encoder expects " + std::to_string(d));
  }
  Tensor table({V, d});
  const double s = config.embed.init_scale;
  for (std::size_t i = 0; i < V; ++i) {
    for (std::size_t c = 0; c < d; ++c) table.at(i, c) = rng.uniform(-s, s);
  }
  if (pretrained) {
    for (std::size_t i = Vocab::kReserved; i < V; ++i) {
      const auto r = pretrained->find(vocab.token(static_cast<std::int32_t>(i)));
      if (r < 0) continue;
      auto src = pretrained->row(static_cast<std::size_t>(r));
      std::copy(src.begin(), src.end(), table.row(i).begin());
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    table.at(Vocab::kPad, c) = 0.0;
    table.at(Vocab::kUnk, c) = 0.0;
  }
  params.add(kEmbedding, table, config.embed.trainable);

  if (scope_on(config) && config.scope_mode == ScopeMode::frozen_centroid) {
    const auto seqs = make_scope_sequences(config, vocab, venues);
    Tensor reprs({venues.size(), d});
    for (std::size_t j = 0; j < venues.size(); ++j) scope_mean(table, seqs[j], reprs.row(j));
    params.add(kScopeReprs, std::move(reprs), false);
  }

  ModelConfig cfg = config;
  cfg.encoder.max_len = config.max_len();
  Encoder(cfg.encoder).init_params(params, rng);
  const std::size_t N = config.n_venues;
  nn::DenseStack main("main", concat_width(config), config.head.main);
  main.init_params(params, rng);
  std::size_t last = main.out_width();
  if (config.variant == Variant::recurrent && scope_on(config)) {
    SimilarityFlow sim(N, config.head.similarity);
    sim.init_params(params, rng);
    nn::DenseStack joint("joint", last + sim.out_width(), config.head.joint);
    joint.init_params(params, rng);
    last = joint.out_width();
  }
  nn::DenseStack("output", last, {{N, false, 0.0}}).init_params(params, rng);
  return params;
}

}  // namespace

TrainedModel build_model(const ModelConfig& config_in, const std::vector<VenueProfile>& venues,
                         const std::vector<Document>& train_docs, std::uint64_t seed,
                         const EmbeddingTable* pretrained) {
  ModelConfig config = config_in;
  if (config.n_venues == 0) config.n_venues = venues.size();
  if (config.n_venues != venues.size()) {
    throw ConfigError("config expects " + std::to_string(config.n_venues) + " venues, venue list has " +
                      std::to_string(venues.size()));
  }
  config.validate();
  {
    std::vector<std::string> ids;
    for (const auto& v : venues) ids.push_back(v.venue_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError("duplicate venue ids");
  }

  std::vector<std::vector<std::string>> token_lists;
  for (const auto& doc : train_docs) {
    try {
      token_lists.push_back(feature_tokens(doc, config.combo, config.pipeline));
    } catch (const EmptyTextError&) {
    }
  }
  if (scope_on(config)) {
    for (const auto& v : venues) token_lists.push_back(config.pipeline.tokens(v.aims_scope));
  }
  TrainedModel m;
  m.config = config;
  m.vocab = build_vocab(token_lists, config.min_count);
  m.venues = venues;
  m.params = allocate(config, m.vocab, venues, seed, pretrained);
  return m;
}

// --- network -------------------------------------------------------------------

struct Network::ExampleTrace {
  Tensor emb;
  Encoder::Trace enc;
  Tensor feat;
  Tensor repr;
  Tensor scores;
  nn::DenseStack::Trace main, sim, joint, out;
  std::size_t main_width = 0;
};

namespace {

ModelConfig with_max_len(ModelConfig c) {
  c.encoder.max_len = c.max_len();
  return c;
}

}  // namespace

Network::Network(const ModelConfig& config)
    : config_(with_max_len(config)), encoder_(config_.encoder, "encoder") {
  const std::size_t N = config_.n_venues;
  main_ = nn::DenseStack("main", concat_width(config_), config_.head.main);
  std::size_t last = main_.out_width();
  if (config_.variant == Variant::recurrent && scope_on(config_)) {
    similarity_ = SimilarityFlow(N, config_.head.similarity);
    joint_ = nn::DenseStack("joint", last + similarity_.out_width(), config_.head.joint);
    last = joint_.out_width();
  }
  output_ = nn::DenseStack("output", last, {{N, false, 0.0}});
}

Tensor embed_sequence(const nn::ParamStore& params, const TokenSequence& seq) {
  const Tensor& table = params.value(kEmbedding);
  const std::size_t V = table.dim(0);
  const std::size_t d = table.dim(1);
  Tensor E({seq.max_len, d});
  for (std::size_t t = 0; t < seq.length() && t < seq.max_len; ++t) {
    const auto id = seq.ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw ShapeError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(V));
    }
    if (id <= Vocab::kUnk) continue;
    auto row = table.row(static_cast<std::size_t>(id));
    std::copy(row.begin(), row.end(), E.row(t).begin());
  }
  return E;
}

TokenSequence encode_document(const TrainedModel& model, const Document& doc) {
  return encode_pad(feature_tokens(doc, model.config.combo, model.config.pipeline), model.vocab,
                    model.config.max_len(), false);
}

std::optional<Tensor> Network::scope_reprs(const TrainedModel& model) const {
  if (!scope_on(config_)) return std::nullopt;
  if (config_.scope_mode == ScopeMode::frozen_centroid) return model.params.value(kScopeReprs);
  const auto seqs = make_scope_sequences(config_, model.vocab, model.venues);
  const Tensor& table = model.params.value(kEmbedding);
  Tensor S({model.venues.size(), table.dim(1)});
  for (std::size_t j = 0; j < seqs.size(); ++j) scope_mean(table, seqs[j], S.row(j));
  return S;
}

Tensor Network::forward_one(const TrainedModel& model, const TokenSequence& seq, const Tensor* scope,
                            nn::Mode mode, Rng* rng, ExampleTrace* trace, Tensor* scores_out) const {
  const auto& params = model.params;
  ExampleTrace local;
  ExampleTrace& tr = trace ? *trace : local;
  tr.emb = embed_sequence(params, seq);
  tr.feat = encoder_.forward(params, tr.emb, seq.mask, &tr.enc);
  if (scope_on(config_)) {
    tr.repr = pooled_repr(tr.emb, seq.mask);
    bool any = false;
    for (double v : tr.repr.values()) any = any || v != 0.0;
    if (!any) throw EmptyTextError("no known tokens in feature text");
    tr.scores = scope_scores(tr.repr.values(), *scope, config_.zero_norm);
    if (scores_out) *scores_out = tr.scores;
  }
  Tensor h;
  if (config_.variant == Variant::recurrent) {
    Tensor m = main_.forward(params, tr.feat, mode, rng, &tr.main);
    tr.main_width = m.size();
    if (scope_on(config_)) {
      Tensor s = similarity_.forward(params, tr.scores, mode, rng, &tr.sim);
      const Tensor parts[] = {m, s};
      h = joint_.forward(params, nn::concat(parts), mode, rng, &tr.joint);
    } else {
      h = std::move(m);
    }
  } else {
    Tensor in = tr.feat;
    if (scope_on(config_)) {
      const Tensor parts[] = {tr.feat, tr.scores};
      in = nn::concat(parts);
    }
    h = main_.forward(params, in, mode, rng, &tr.main);
  }
  return output_.forward(params, h, mode, rng, &tr.out);
}

void Network::backward_one(TrainedModel& model, const TokenSequence& seq, const Tensor* scope,
                           const ExampleTrace& tr, const Tensor& dlogits, Tensor* dscope) const {
  auto& params = model.params;
  Tensor dh = output_.backward(params, tr.out, dlogits);
  Tensor dfeat;
  Tensor dscores;
  if (config_.variant == Variant::recurrent) {
    Tensor dm = dh;
    if (scope_on(config_)) {
      Tensor dcat = joint_.backward(params, tr.joint, dh);
      const std::size_t widths[] = {tr.main_width, similarity_.out_width()};
      auto parts = nn::split(dcat, widths);
      dm = std::move(parts[0]);
      dscores = similarity_.backward(params, tr.sim, parts[1]);
    }
    dfeat = main_.backward(params, tr.main, dm);
  } else {
    Tensor din = main_.backward(params, tr.main, dh);
    if (scope_on(config_)) {
      const std::size_t widths[] = {tr.feat.size(), config_.n_venues};
      auto parts = nn::split(din, widths);
      dfeat = std::move(parts[0]);
      dscores = std::move(parts[1]);
    } else {
      dfeat = std::move(din);
    }
  }
  Tensor demb = encoder_.backward(params, tr.enc, dfeat);
  if (scope_on(config_)) {
    Tensor drepr({tr.repr.size()});
    scope_scores_backward(tr.repr.values(), *scope, dscores, drepr.values(), dscope);
    demb.add_inplace(pooled_repr_backward(seq.mask, drepr.size(), drepr));
  }
  auto& emb = params.get(kEmbedding);
  if (!emb.trainable) return;
  const std::size_t d = demb.dim(1);
  for (std::size_t t = 0; t < seq.length() && t < seq.max_len; ++t) {
    const auto id = seq.ids[t];
    if (id <= Vocab::kUnk) continue;
    auto g = emb.grad.row(static_cast<std::size_t>(id));
    auto src = demb.row(t);
    for (std::size_t c = 0; c < d; ++c) g[c] += src[c];
  }
}

double Network::batch_loss(TrainedModel& model, std::span<const Example> batch, nn::Mode mode, Rng* rng,
                           bool grads) const {
  if (batch.empty()) throw ConfigError("empty batch");
  std::optional<Tensor> S = scope_reprs(model);
  const bool siamese = S && config_.scope_mode == ScopeMode::siamese;
  std::optional<Tensor> dS;
  if (grads && siamese) dS.emplace(S->shape());
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    ExampleTrace tr;
    Tensor logits = forward_one(model, ex.seq, S ? &*S : nullptr, mode, rng, &tr, nullptr);
    auto sx = nn::softmax_xent(logits, ex.label);
    total += sx.loss;
    if (!grads) continue;
    Tensor dlogits = nn::softmax_xent_backward(sx.probs, ex.label);
    for (auto& v : dlogits.values()) v *= inv;
    backward_one(model, ex.seq, S ? &*S : nullptr, tr, dlogits, dS ? &*dS : nullptr);
  }
  auto& emb = model.params.get(kEmbedding);
  if (dS && emb.trainable) {
    const auto seqs = make_scope_sequences(config_, model.vocab, model.venues);
    const std::size_t d = emb.value.dim(1);
    for (std::size_t j = 0; j < seqs.size(); ++j) {
      const std::size_t L = seqs[j].length();
      if (L == 0) continue;
      const double w = 1.0 / static_cast<double>(L);
      auto src = dS->row(j);
      for (std::size_t t = 0; t < L; ++t) {
        const auto id = seqs[j].ids[t];
        if (id <= Vocab::kUnk) continue;
        auto g = emb.grad.row(static_cast<std::size_t>(id));
        for (std::size_t c = 0; c < d; ++c) g[c] += w * src[c];
      }
    }
  }
  return total * inv;
}

Network::Output Network::infer(const TrainedModel& model, const TokenSequence& seq,
                               const Tensor* scope_reprs) const {
  if (scope_on(config_) && !scope_reprs) throw ConfigError("scope representations required");
  Output out;
  Tensor scores;
  out.logits = forward_one(model, seq, scope_reprs, nn::Mode::infer, nullptr, nullptr,
                           scope_on(config_) ? &scores : nullptr);
  out.probs = nn::softmax(out.logits);
  if (scope_on(config_)) out.scope_scores = std::move(scores);
  return out;
}

// --- ranking -------------------------------------------------------------------

namespace {

std::vector<std::size_t> rank_order(std::span<const double> probs, const std::vector<VenueProfile>& venues) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return venues[a].venue_id < venues[b].venue_id;
  });
  return order;
}

std::unordered_map<std::string, std::size_t> venue_index(const TrainedModel& model) {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t j = 0; j < model.venues.size(); ++j) idx.emplace(model.venues[j].venue_id, j);
  return idx;
}

struct Encoded {
  std::vector<Example> examples;
  std::size_t skipped = 0;
};

Encoded encode_split(const TrainedModel& model, const std::vector<Document>& docs) {
  const auto idx = venue_index(model);
  Encoded out;
  for (const auto& doc : docs) {
    if (!doc.venue_id) throw ConfigError("document '" + doc.id + "' has no venue label");
    auto it = idx.find(*doc.venue_id);
    if (it == idx.end()) {
      throw ConfigError("document '" + doc.id + "' is labelled with unknown venue '" + *doc.venue_id + "'");
    }
    try {
      out.examples.push_back({encode_document(model, doc), it->second});
    } catch (const EmptyTextError&) {
      ++out.skipped;
    }
  }
  return out;
}

double accuracy_on(const TrainedModel& model, const Network& net, const std::vector<Example>& examples) {
  if (examples.empty()) return 0.0;
  const auto S = net.scope_reprs(model);
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    const auto out = net.infer(model, ex.seq, S ? &*S : nullptr);
    const auto order = rank_order(out.probs.values(), model.venues);
    if (order.front() == ex.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace

// --- training ------------------------------------------------------------------

void train(TrainedModel& model, const CorpusSplit& split, const TrainCallbacks& callbacks) {
  model.config.validate();
  if (split.train.empty()) throw ConfigError("empty training split");
  const Network net(model.config);
  const auto& hyper = model.config.train;

  auto train_set = encode_split(model, split.train);
  auto val_set = encode_split(model, split.validation);
  model.skipped_documents = train_set.skipped + val_set.skipped;
  if (train_set.examples.empty()) throw ConfigError("empty training split after cleaning");
  const auto& val = val_set.examples.empty() ? train_set.examples : val_set.examples;

  model.initial_train_loss = net.batch_loss(model, train_set.examples, nn::Mode::infer, nullptr, false);
  model.history.clear();

  Rng rng(hyper.seed);
  nn::Optimizer opt(hyper.optimizer);
  nn::ParamStore best = model.params;
  double best_acc = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set.examples[order[i]]);
      model.params.zero_grad();
      const double loss = net.batch_loss(model, batch, nn::Mode::train, &rng, true);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(n_batches + 1));
      }
      opt.step(model.params);
      loss_sum += loss;
      ++n_batches;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n_batches), accuracy_on(model, net, val)};
    model.history.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
    if (rec.validation_accuracy > best_acc) {
      best_acc = rec.validation_accuracy;
      best = model.params;
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hyper.patience && hyper.patience > 0) {
      break;
    }
  }
  model.params.assign_values(best);
}

double top1_accuracy(const TrainedModel& model, const std::vector<Document>& docs) {
  const Network net(model.config);
  return accuracy_on(model, net, encode_split(model, docs).examples);
}

// --- prediction ----------------------------------------------------------------

Predictor::Predictor(std::shared_ptr<const TrainedModel> model)
    : model_(std::move(model)), net_(model_->config), scope_(net_.scope_reprs(*model_)) {}

std::vector<double> Predictor::probabilities(const TokenSequence& seq) const {
  auto out = net_.infer(*model_, seq, scope_ ? &*scope_ : nullptr);
  return {out.probs.values().begin(), out.probs.values().end()};
}

Prediction Predictor::predict(const TokenSequence& seq, std::size_t k) const {
  const std::size_t N = model_->venues.size();
  if (k < 1 || k > N) {
    throw ConfigError("k must be between 1 and " + std::to_string(N) + ", got " + std::to_string(k));
  }
  auto out = net_.infer(*model_, seq, scope_ ? &*scope_ : nullptr);
  const auto order = rank_order(out.probs.values(), model_->venues);
  Prediction p;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t j = order[r];
    RankedVenue rv{model_->venues[j].venue_id, out.probs[j], std::nullopt};
    if (out.scope_scores) rv.scope_score = (*out.scope_scores)[j];
    p.ranked.push_back(std::move(rv));
  }
  return p;
}

Prediction Predictor::predict(const Document& doc, std::size_t k) const {
  return predict(encode_document(*model_, doc), k);
}

Prediction predict_topk(const TrainedModel& model, const Document& doc, std::size_t k) {
  // Non-owning alias: the predictor does not outlive this call.
  std::shared_ptr<const TrainedModel> alias(std::shared_ptr<const TrainedModel>{}, &model);
  return Predictor(alias).predict(doc, k);
}

// --- persistence -----------------------------------------------------------------

json history_json(const TrainedModel& model) {
  json h = json::array();
  for (const auto& r : model.history) {
    h.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"validation_accuracy", r.validation_accuracy}});
  }
  json out = {{"history", h}, {"best_epoch", model.best_epoch}, {"skipped_documents", model.skipped_documents}};
  out["initial_train_loss"] = model.initial_train_loss ? json(*model.initial_train_loss) : json(nullptr);
  return out;
}

void save_model(const TrainedModel& model, std::ostream& out) {
  json meta = history_json(model);
  meta["kind"] = kModelKind;
  meta["config"] = to_json(model.config);
  meta["pipeline"] = model.config.pipeline.version();
  meta["vocab"] = model.vocab.tokens();
  json venues = json::array();
  for (const auto& v : model.venues) {
    venues.push_back({{"venue_id", v.venue_id}, {"name", v.name}, {"aims_scope", v.aims_scope}});
  }
  meta["venues"] = venues;
  nn::write_checkpoint(out, meta, model.params);
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  save_model(model, out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

TrainedModel load_model(std::istream& in) {
  auto ckpt = nn::read_checkpoint(in);
  const json& meta = ckpt.meta;
  try {
    if (meta.value("kind", std::string()) != kModelKind) throw ConfigError("checkpoint is not a model");
    TrainedModel m;
    m.config = model_config_from_json(meta.at("config"));
    const auto recorded = meta.at("pipeline").get<std::string>();
    if (recorded != m.config.pipeline.version()) {
      throw ConfigError("pipeline version mismatch: checkpoint records '" + recorded + "', config says '" +
                        m.config.pipeline.version() + "'");
    }
    const auto tokens = meta.at("vocab").get<std::vector<std::string>>();
    if (tokens.size() < Vocab::kReserved) throw ConfigError("checkpoint vocabulary is truncated");
    m.vocab = Vocab(std::vector<std::string>(tokens.begin() + Vocab::kReserved, tokens.end()));
    if (m.vocab.tokens() != tokens) throw ConfigError("checkpoint vocabulary has unexpected reserved tokens");
    for (const auto& v : meta.at("venues")) {
      m.venues.push_back({v.at("venue_id").get<std::string>(), v.value("name", std::string()),
                          v.value("aims_scope", std::string())});
    }
    for (const auto& r : meta.value("history", json::array())) {
      m.history.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                           r.at("validation_accuracy").get<double>()});
    }
    if (meta.contains("initial_train_loss") && !meta["initial_train_loss"].is_null()) {
      m.initial_train_loss = meta["initial_train_loss"].get<double>();
    }
    m.best_epoch = meta.value("best_epoch", std::size_t{0});
    m.skipped_documents = meta.value("skipped_documents", std::size_t{0});
    m.config.validate();
    if (m.config.n_venues != m.venues.size()) throw ConfigError("venue list does not match config");

    // The stored manifest must be exactly what the config implies.
    const auto expected = allocate(m.config, m.vocab, m.venues, 0, nullptr);
    const auto& got = ckpt.params.all();
    if (got.size() != expected.size()) throw ConfigError("parameter manifest does not match config");
    for (std::size_t i = 0; i < got.size(); ++i) {
      const auto& e = expected.all()[i];
      if (got[i].name != e.name || got[i].value.shape() != e.value.shape() ||
          got[i].trainable != e.trainable) {
        throw ConfigError("parameter manifest mismatch at '" + got[i].name + "'");
      }
    }
    m.params = std::move(ckpt.params);
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint metadata: ") + e.what());
  }
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model '" + path.string() + "'");
  return load_model(in);
}

}  // namespace venuerank

namespace venuerank {

ArchitectureCheck grad_check_architecture(Variant variant, std::uint64_t seed,
                                          const nn::GradCheckOptions& options) {
  constexpr std::size_t kM = 6, kD = 8, kN = 4, kF = 3, kU = 5, kBatch = 3;
  SynthOptions so;
  so.n_venues = kN;
  so.docs_per_venue = 2;
  so.vocab_size = 40;
  so.seed = seed;
  so.title_len = 3;
  so.abstract_len = 5;
  so.keyword_count = 2;
  so.scope_len = 4;
  const auto synth = synth_corpus(so);

  ModelConfig c = ModelConfig::desk(variant);
  c.combo = FeatureCombo::parse("TAKS");
  c.encoder.embed_dim = kD;
  c.encoder.filters = kF;
  c.encoder.units = kU;
  c.embed.trainable = true;
  c.embed.init_scale = 0.5;
  c.head.main = variant == Variant::baseline ? blocks({6, 5, 4}, 0.2) : blocks({6, 5}, 0.2);
  c.head.similarity = {{7, 6, 5}, 0.4};
  c.head.joint = blocks({6}, 0.3);
  std::string label = to_string(variant);
  if (variant == Variant::recurrent) {
    constexpr EncoderKind kinds[] = {EncoderKind::lstm, EncoderKind::bilstm, EncoderKind::gru,
                                     EncoderKind::bigru};
    c.encoder.kind = kinds[seed % 4];
    label += "/" + to_string(c.encoder.kind);
  }
  // Alternate scope modes in blocks of four seeds so every recurrent cell
  // meets both.
  c.scope_mode = (seed / 4) % 2 == 1 ? ScopeMode::siamese : ScopeMode::frozen_centroid;
  label += "/" + to_string(c.scope_mode);

  TrainedModel model = build_model(c, synth.venues, synth.documents, seed);
  const Network net(model.config);

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  // Zero-initialised biases put ReLUs fed by an all-zero row exactly on the
  // kink, where central differences average the two one-sided slopes. A
  // positive offset also keeps most units alive so more paths get checked.
  for (auto& p : model.params.all()) {
    if (!p.trainable || !(p.name.ends_with(".b") || p.name.ends_with(".bias"))) continue;
    for (auto& v : p.value.values()) v = rng.uniform(0.05, 0.3);
  }
  const std::size_t V = model.vocab.size();
  std::vector<Example> batch;
  for (std::size_t b = 0; b < kBatch; ++b) {
    std::vector<std::string> tokens(1 + rng.index(kM));
    for (auto& t : tokens) {
      t = model.vocab.token(static_cast<std::int32_t>(Vocab::kReserved + rng.index(V - Vocab::kReserved)));
    }
    batch.push_back({encode_pad(tokens, model.vocab, kM, false), rng.index(kN)});
  }
  const std::uint64_t mask_seed = rng.next();
  auto loss = [&] {
    Rng r(mask_seed);
    return net.batch_loss(model, batch, nn::Mode::train, &r, false);
  };
  auto grads = [&] {
    model.params.zero_grad();
    Rng r(mask_seed);
    net.batch_loss(model, batch, nn::Mode::train, &r, true);
  };
  nn::GradCheckOptions opts = options;
  if (opts.seed == 0) opts.seed = seed;
  return {label, nn::grad_check(model.params, loss, grads, opts)};
}

}  // namespace venuerank
