#pragma once

// The three recommender architectures, their training loop and top-K
// prediction.
//
//   baseline     embed -> conv1d -> 3 dense blocks -> softmax
//   recurrent    embed -> (bi)LSTM/(bi)GRU -> 2 dense blocks -> softmax
//   multikernel  embed -> conv1d k in {2,3,4} -> max pools -> 2 dense blocks -> softmax
//
// With scope similarity on, recurrent feeds the cosine score vector through a
// similarity flow and joins it with the main flow in a concat block; baseline
// and multikernel append the score vector to the encoder features.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "venuerank/corpus.hpp"
#include "venuerank/embed.hpp"
#include "venuerank/encoders.hpp"
#include "venuerank/gradcheck.hpp"
#include "venuerank/nn.hpp"
#include "venuerank/optim.hpp"
#include "venuerank/scopesim.hpp"
#include "venuerank/textprep.hpp"

namespace venuerank {

enum class Variant { baseline, recurrent, multikernel };
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// How venue scope representations are produced.
///   frozen_centroid  mean of the initial embedding rows of the scope tokens,
///                    computed once and stored as a non-trainable parameter.
///   siamese          masked mean of the current (shared) embedding over the
///                    scope tokens, recomputed every step.
enum class ScopeMode { frozen_centroid, siamese };
std::string to_string(ScopeMode m);
ScopeMode scope_mode_from_string(const std::string& s);

struct HeadConfig {
  std::vector<nn::DenseBlockSpec> main;
  SimilarityFlowSpec similarity;
  std::vector<nn::DenseBlockSpec> joint;  // concat flow, recurrent with scope only
};

struct EmbedConfig {
  /// Word-vector file used to initialise the table. Empty: random init.
  std::string pretrained_path;
  bool trainable = false;
  double init_scale = 0.1;  // U(-s, s) for rows not covered by a pretrained table
};

struct TrainHyper {
  nn::OptimizerHyper optimizer;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
};

struct ModelConfig {
  Variant variant = Variant::multikernel;
  EncoderSpec encoder;
  FeatureCombo combo = FeatureCombo::parse("TAKS");
  std::size_t n_venues = 0;  // filled from the venue list at build time when 0
  HeadConfig head;
  EmbedConfig embed;
  TrainHyper train;
  ScopeMode scope_mode = ScopeMode::siamese;
  ZeroNormPolicy zero_norm = ZeroNormPolicy::error;
  Pipeline pipeline;
  std::size_t min_count = 1;

  /// Full-scale defaults for a variant (d = 300 FastText paths, d = 768 for
  /// multikernel, F = 200, u = 100, full head widths).
  static ModelConfig defaults(Variant variant);
  /// Same wiring with small widths so training runs in seconds.
  static ModelConfig desk(Variant variant);

  std::size_t max_len() const { return max_len_for(combo); }
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainedModel {
  ModelConfig config;
  nn::ParamStore params;
  Vocab vocab;
  std::vector<VenueProfile> venues;  // canonical order, frozen at build time
  std::vector<EpochRecord> history;
  std::optional<double> initial_train_loss;
  std::size_t best_epoch = 0;
  std::size_t skipped_documents = 0;

  std::vector<std::string> venue_ids() const;
};

/// Vocabulary over the training documents' feature tokens (and the venue
/// scopes when scope similarity is on), parameters initialised under `seed`.
TrainedModel build_model(const ModelConfig& config, const std::vector<VenueProfile>& venues,
                         const std::vector<Document>& train_docs, std::uint64_t seed,
                         const EmbeddingTable* pretrained = nullptr);

/// Head input width for a config; exposed for tests of the wiring.
std::size_t concat_width(const ModelConfig& config);

// --- forward/backward --------------------------------------------------------

struct Example {
  TokenSequence seq;
  std::size_t label = 0;
};

/// Layers derived from a config. Holds no parameters.
class Network {
 public:
  explicit Network(const ModelConfig& config);

  struct ExampleTrace;

  /// Mean cross-entropy over `batch`. With `grads` set, accumulates
  /// d loss / d param into params (the caller zeroes them first).
  double batch_loss(TrainedModel& model, std::span<const Example> batch, nn::Mode mode, Rng* rng,
                    bool grads) const;

  /// Logits, softmax probabilities and (with scope on) the cosine scores.
  struct Output {
    nn::Tensor logits;
    nn::Tensor probs;
    std::optional<nn::Tensor> scope_scores;
  };
  /// Inference-mode forward. `scope_reprs` must come from scope_reprs().
  Output infer(const TrainedModel& model, const TokenSequence& seq, const nn::Tensor* scope_reprs) const;

  /// Current [N, d] scope representations (nullopt when scope is off).
  std::optional<nn::Tensor> scope_reprs(const TrainedModel& model) const;

  const ModelConfig& config() const noexcept { return config_; }

 private:
  nn::Tensor forward_one(const TrainedModel& model, const TokenSequence& seq, const nn::Tensor* scope,
                         nn::Mode mode, Rng* rng, ExampleTrace* trace,
                         nn::Tensor* scores_out) const;
  void backward_one(TrainedModel& model, const TokenSequence& seq, const nn::Tensor* scope,
                    const ExampleTrace& trace, const nn::Tensor& dlogits, nn::Tensor* dscope) const;

  ModelConfig config_;
  Encoder encoder_;
  nn::DenseStack main_;
  SimilarityFlow similarity_;
  nn::DenseStack joint_;
  nn::DenseStack output_;
};

/// Per-position embedding matrix [M, d] read from the "embedding" parameter.
/// PAD and UNK positions are zero rows.
nn::Tensor embed_sequence(const nn::ParamStore& params, const TokenSequence& seq);

/// Encodes a document for a model; throws EmptyTextError when the combo's
/// text cleans to nothing.
TokenSequence encode_document(const TrainedModel& model, const Document& doc);

// --- training ----------------------------------------------------------------

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Minibatch training of softmax cross-entropy with early stopping on
/// validation Accuracy@1. The best-validation parameters are kept.
void train(TrainedModel& model, const CorpusSplit& split, const TrainCallbacks& callbacks = {});

/// Fraction of labelled docs whose top-1 prediction is the true venue.
double top1_accuracy(const TrainedModel& model, const std::vector<Document>& docs);

// --- prediction --------------------------------------------------------------

struct RankedVenue {
  std::string venue_id;
  double probability = 0.0;
  std::optional<double> scope_score;
};

struct Prediction {
  std::vector<RankedVenue> ranked;
};

/// Read-only inference wrapper; caches the scope representations so
/// concurrent callers share one immutable snapshot.
class Predictor {
 public:
  explicit Predictor(std::shared_ptr<const TrainedModel> model);

  /// Full ranking truncated to k. Ties break by ascending venue_id.
  Prediction predict(const Document& doc, std::size_t k) const;
  Prediction predict(const TokenSequence& seq, std::size_t k) const;
  std::vector<double> probabilities(const TokenSequence& seq) const;

  const TrainedModel& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const TrainedModel> model_;
  Network net_;
  std::optional<nn::Tensor> scope_;
};

Prediction predict_topk(const TrainedModel& model, const Document& doc, std::size_t k);

// --- persistence ---------------------------------------------------------------

void save_model(const TrainedModel& model, std::ostream& out);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(std::istream& in);
TrainedModel load_model(const std::filesystem::path& path);

nlohmann::json history_json(const TrainedModel& model);

// --- gradient check -------------------------------------------------------------

/// Step for whole-architecture checks. Smaller steps lose gradient entries
/// near 1e-9 to rounding in the loss.
inline constexpr double kArchitectureGradEpsilon = 3e-5;

struct ArchitectureCheck {
  std::string label;  // e.g. "recurrent/bigru"
  nn::GradReport report;
};

/// Finite-difference check of a whole architecture at tiny dimensions
/// (M = 6, d = 8, N = 4, F = 3, u = 5) with scope similarity on and a
/// trainable embedding. Dropout runs in train mode under a fixed mask.
/// The recurrent variant cycles LSTM, BiLSTM, GRU, BiGRU with the seed.
/// Scope mode alternates between frozen and siamese every four seeds.
ArchitectureCheck grad_check_architecture(Variant variant, std::uint64_t seed,
                                          const nn::GradCheckOptions& options = {kArchitectureGradEpsilon});

}  // namespace venuerank
