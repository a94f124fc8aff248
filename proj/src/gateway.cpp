#include "venuerank/gateway.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "venuerank/errors.hpp"
#include "venuerank/evalharness.hpp"

namespace venuerank {

using nlohmann::json;

// --- requests ----------------------------------------------------------------

namespace {

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::vector<std::string> split_keywords(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ';')) {
    if (!blank(cur)) out.push_back(join(split_whitespace(cur)));
  }
  return out;
}

}  // namespace

RecommendRequest parse_recommend_request(const json& body) {
  if (!body.is_object()) throw RequestError("request body must be a JSON object", "body");
  RecommendRequest r;
  for (const char* f : {"title", "abstract"}) {
    if (!body.contains(f) || body[f].is_null()) continue;
    if (!body[f].is_string()) throw RequestError(std::string(f) + " must be a string", f);
    (std::string(f) == "title" ? r.title : r.abstract) = body[f].get<std::string>();
  }
  if (body.contains("keywords") && !body["keywords"].is_null()) {
    const auto& kw = body["keywords"];
    if (kw.is_string()) {
      r.keywords = split_keywords(kw.get<std::string>());
    } else if (kw.is_array()) {
      for (const auto& k : kw) {
        if (!k.is_string()) throw RequestError("keywords must be strings", "keywords");
        if (!blank(k.get<std::string>())) r.keywords.push_back(k.get<std::string>());
      }
    } else {
      throw RequestError("keywords must be a list of strings", "keywords");
    }
  }
  if (body.contains("k") && !body["k"].is_null()) {
    const auto& k = body["k"];
    if (!k.is_number_integer() || k.get<long long>() < 1) {
      throw RequestError("k must be a positive integer", "k");
    }
    r.k = static_cast<std::size_t>(k.get<long long>());
  }
  if (blank(r.title) && blank(r.abstract) && r.keywords.empty()) {
    throw RequestError("at least one of title, abstract, keywords must be nonempty", "title");
  }
  return r;
}

std::shared_ptr<const ModelSnapshot> load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::istringstream ss(bytes);
  auto snap = std::make_shared<ModelSnapshot>();
  snap->model = std::make_shared<const TrainedModel>(load_model(ss));
  snap->predictor = std::make_unique<Predictor>(snap->model);
  char id[17];
  std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  snap->model_id = id;
  snap->path = path;
  return snap;
}

json recommend_json(const ModelSnapshot& snap, const RecommendRequest& req) {
  const auto& model = *snap.model;
  const std::size_t N = model.venues.size();
  const std::size_t k = req.k.value_or(std::min(kDefaultTopK, N));
  if (k < 1 || k > N) {
    throw RequestError("k must be between 1 and " + std::to_string(N), "k");
  }
  Document doc;
  doc.id = "request";
  doc.title = req.title;
  doc.abstract = req.abstract;
  doc.keywords = req.keywords;
  const auto pred = snap.predictor->predict(doc, k);
  std::unordered_map<std::string, const VenueProfile*> by_id;
  for (const auto& v : model.venues) by_id.emplace(v.venue_id, &v);
  json ranked = json::array();
  for (const auto& rv : pred.ranked) {
    json e = {{"venue_id", rv.venue_id}, {"name", by_id.at(rv.venue_id)->name}, {"probability", rv.probability}};
    if (rv.scope_score) e["scope_score"] = *rv.scope_score;
    ranked.push_back(std::move(e));
  }
  return {{"model_id", snap.model_id}, {"ranked", ranked}};
}

// --- service -------------------------------------------------------------------

RecommendService::RecommendService(std::filesystem::path model_path)
    : path_(std::move(model_path)), snap_(load_snapshot(path_)) {}

std::shared_ptr<const ModelSnapshot> RecommendService::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return snap_;
}

RecommendService::Response RecommendService::recommend(const std::string& body) const {
  json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded()) return {400, {{"error", "request body is not valid JSON"}, {"field", "body"}}};
  const auto snap = snapshot();
  try {
    return {200, recommend_json(*snap, parse_recommend_request(parsed))};
  } catch (const RequestError& e) {
    return {400, {{"error", e.what()}, {"field", e.field()}, {"model_id", snap->model_id}}};
  } catch (const EmptyTextError&) {
    return {422,
            {{"error", "feature text is empty after cleaning"}, {"field", "text"}, {"model_id", snap->model_id}}};
  } catch (const std::exception& e) {
    std::cerr << "recommend failed: " << e.what() << '\n';
    return {500, {{"error", "internal error"}, {"model_id", snap->model_id}}};
  }
}

RecommendService::Response RecommendService::venues() const {
  const auto snap = snapshot();
  json list = json::array();
  for (const auto& v : snap->model->venues) {
    list.push_back({{"venue_id", v.venue_id}, {"name", v.name}, {"aims_scope", v.aims_scope}});
  }
  return {200, {{"model_id", snap->model_id}, {"venues", list}}};
}

RecommendService::Response RecommendService::health() const {
  const auto snap = snapshot();
  const auto& c = snap->model->config;
  return {200,
          {{"status", "ok"},
           {"model_id", snap->model_id},
           {"n_venues", snap->model->venues.size()},
           {"variant", to_string(c.variant)},
           {"encoder", to_string(c.encoder.kind)},
           {"combo", c.combo.code()},
           {"uses_scope", c.combo.scope},
           {"pipeline", c.pipeline.version()}}};
}

RecommendService::Response RecommendService::reload() {
  std::shared_ptr<const ModelSnapshot> fresh;
  try {
    fresh = load_snapshot(path_);
  } catch (const std::exception& e) {
    std::cerr << "reload failed, keeping current model: " << e.what() << '\n';
    return {500, {{"error", "reload failed"}, {"model_id", snapshot()->model_id}}};
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    snap_ = fresh;
  }
  return {200, {{"model_id", fresh->model_id}, {"reloaded", true}}};
}

// --- http ----------------------------------------------------------------------

struct HttpServer::Impl {
  explicit Impl(RecommendService& s) : service(s) {}
  RecommendService& service;
  httplib::Server server;
  std::thread thread;
};

namespace {

void reply(httplib::Response& res, const RecommendService::Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json; charset=utf-8");
}

}  // namespace

HttpServer::HttpServer(RecommendService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto* svc = &impl_->service;
  srv.Post("/recommend", [svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->recommend(req.body));
  });
  srv.Get("/venues", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->venues()); });
  srv.Get("/health", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->health()); });
  srv.Post("/reload", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->reload()); });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      std::cerr << "request failed: " << e.what() << '\n';
    } catch (...) {
    }
    reply(res, {500, {{"error", "internal error"}}});
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(), "application/json; charset=utf-8");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = srv.bind_to_any_port(host);
  } else if (!srv.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

// --- cli -----------------------------------------------------------------------

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_reload{false};
std::atomic<bool> g_stop{false};

extern "C" void on_hup(int) { g_reload = true; }
extern "C" void on_stop(int) { g_stop = true; }

template <class F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

std::array<double, 3> parse_ratios(const std::string& s) {
  std::array<double, 3> r{};
  std::istringstream in(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(in, part, ',')) {
    if (i == 3) throw UsageError("--split takes three comma-separated ratios");
    try {
      r[i++] = std::stod(part);
    } catch (const std::exception&) {
      throw UsageError("--split: bad ratio '" + part + "'");
    }
  }
  if (i != 3) throw UsageError("--split takes three comma-separated ratios");
  return r;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<Document> read_docs(const std::string& path, std::ostream& err) {
  auto load = load_corpus(path, corpus_format_from_path(path));
  for (const auto& r : load.rejected) {
    err << "skipped document '" << r.id << "' (line " << r.line << "): " << r.reason << '\n';
  }
  return load.documents;
}

std::string default_model_path() {
  const char* env = std::getenv("VENUERANK_MODEL");
  return env ? env : "";
}

json metrics_to_json(const CellMetrics& m) {
  json hr, mc;
  for (std::size_t i = 0; i < kReportKs.size(); ++i) {
    hr["top" + std::to_string(kReportKs[i])] = m.hitrate[i];
    mc["top" + std::to_string(kReportKs[i])] = m.macro[i];
  }
  return {{"hitrate", hr}, {"macro", mc}, {"documents", m.test_documents}};
}

struct TrainArgs {
  std::string corpus, venues, out, config_path, vectors, variant = "multikernel", encoder, combo = "TAKS";
  std::string scale = "desk", scope_mode, optimizer, pipeline, split = "0.6,0.2,0.2";
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr;
  bool stratified = false, trainable = false, frozen = false;
};

ModelConfig config_from_args(const TrainArgs& a) {
  return as_usage([&] {
    const Variant v = variant_from_string(a.variant);
    ModelConfig c = a.scale == "full" ? ModelConfig::defaults(v) : ModelConfig::desk(v);
    if (a.scale != "full" && a.scale != "desk") throw ConfigError("--scale must be desk or full");
    if (!a.config_path.empty()) {
      std::ifstream in(a.config_path);
      if (!in) throw ConfigError("cannot open config '" + a.config_path + "'");
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded()) throw ConfigError("config '" + a.config_path + "' is not valid JSON");
      if (!j.contains("variant")) j["variant"] = a.variant;
      j["desk"] = a.scale != "full";
      c = model_config_from_json(j);
    }
    if (!a.encoder.empty()) c.encoder.kind = encoder_kind_from_string(a.encoder);
    c.combo = FeatureCombo::parse(a.combo);
    c.train.seed = a.seed;
    if (a.epochs) c.train.epochs = *a.epochs;
    if (a.batch_size) c.train.batch_size = *a.batch_size;
    if (a.lr) c.train.optimizer.learning_rate = *a.lr;
    if (!a.optimizer.empty()) c.train.optimizer.kind = nn::optimizer_kind_from_string(a.optimizer);
    if (!a.scope_mode.empty()) c.scope_mode = scope_mode_from_string(a.scope_mode);
    if (!a.pipeline.empty()) c.pipeline = Pipeline::from_version(a.pipeline);
    if (a.trainable) c.embed.trainable = true;
    if (a.frozen) c.embed.trainable = false;
    if (!a.vectors.empty()) c.embed.pretrained_path = a.vectors;
    return c;
  });
}

int run_synth(std::ostream& out, const std::string& dir, const SynthOptions& so, std::size_t dim, double noise,
              const std::string& format) {
  const auto fmt = as_usage([&] {
    if (format == "jsonl") return CorpusFormat::jsonl;
    if (format == "csv") return CorpusFormat::csv;
    throw ConfigError("--format must be jsonl or csv");
  });
  const auto synth = synth_corpus(so);
  std::filesystem::create_directories(dir);
  const auto corpus = std::filesystem::path(dir) / (fmt == CorpusFormat::csv ? "corpus.csv" : "corpus.jsonl");
  const auto venues = std::filesystem::path(dir) / "venues.jsonl";
  const auto vectors = std::filesystem::path(dir) / "vectors.vec";
  write_corpus(synth.documents, corpus, fmt);
  write_venues(synth.venues, venues);
  write_vectors(synth_vectors(synth, dim, noise, so.seed), vectors);
  out << json{{"corpus", corpus.string()},
              {"venues", venues.string()},
              {"vectors", vectors.string()},
              {"documents", synth.documents.size()},
              {"n_venues", synth.venues.size()},
              {"vocabulary", synth.vocabulary.size()}}
             .dump()
      << '\n';
  return 0;
}

int run_train(std::ostream& out, std::ostream& err, const TrainArgs& a) {
  ModelConfig config = config_from_args(a);
  const auto ratios = parse_ratios(a.split);
  auto docs = read_docs(a.corpus, err);
  auto venues = load_venues(a.venues, {config.combo.scope});
  validate_labels(docs, venues);
  const auto split = split_corpus(docs, {ratios, a.seed, a.stratified});
  std::optional<EmbeddingTable> table;
  if (!config.embed.pretrained_path.empty()) {
    table = load_vectors(config.embed.pretrained_path);
    config.encoder.embed_dim = table->dim();
  }
  config.n_venues = venues.size();
  TrainedModel model = build_model(config, venues, split.train, a.seed, table ? &*table : nullptr);
  train(model, split, {[&](const EpochRecord& r) {
          err << "epoch " << r.epoch << " loss " << r.train_loss << " val@1 " << r.validation_accuracy << '\n';
        }});
  save_model(model, a.out);
  json result = history_json(model);
  result["model"] = a.out;
  result["config"] = to_json(model.config);
  result["split"] = {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}};
  if (!split.test.empty()) {
    try {
      result["test"] = metrics_to_json(evaluate_model(model, split.test));
    } catch (const ConfigError& e) {
      err << "test evaluation skipped: " << e.what() << '\n';
    }
  }
  out << result.dump() << '\n';
  return 0;
}

void print_ranking(std::ostream& out, const json& response) {
  std::size_t rank = 1;
  for (const auto& e : response["ranked"]) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", e["probability"].get<double>());
    out << rank++ << '\t' << e["venue_id"].get<std::string>() << '\t' << buf << '\n';
  }
}

int run_serve(std::ostream& out, const std::string& model, const std::string& host, int port) {
  if (model.empty()) throw UsageError("serve needs --model or VENUERANK_MODEL");
  RecommendService service(model);
  HttpServer server(service);
  const int bound = server.start(host, port);
  out << json{{"listening", host + ":" + std::to_string(bound)}, {"model_id", service.snapshot()->model_id}}.dump()
      << std::endl;
  g_stop = false;
  g_reload = false;
  std::signal(SIGHUP, on_hup);
  std::signal(SIGINT, on_stop);
  std::signal(SIGTERM, on_stop);
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (g_reload.exchange(false)) service.reload();
  }
  server.stop();
  return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"venuerank: manuscript venue recommendation", "venuerank"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Write a planted-signal corpus, venue list and vectors");
  std::string synth_dir, synth_format = "jsonl";
  SynthOptions so;
  std::size_t synth_dim = 24;
  double synth_noise = 0.3;
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--venues", so.n_venues, "Number of venues")->capture_default_str();
  synth->add_option("--docs-per-venue", so.docs_per_venue, "Documents per venue")->capture_default_str();
  synth->add_option("--vocab", so.vocab_size, "Vocabulary size")->capture_default_str();
  synth->add_option("--signal", so.signal_strength, "Topic-word probability")->capture_default_str();
  synth->add_option("--scope-len", so.scope_len, "Scope text length in words")->capture_default_str();
  synth->add_option("--seed", so.seed, "Random seed")->capture_default_str();
  synth->add_option("--dim", synth_dim, "Vector dimension")->capture_default_str();
  synth->add_option("--noise", synth_noise, "Vector noise scale")->capture_default_str();
  synth->add_option("--format", synth_format, "jsonl or csv")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  TrainArgs ta;
  tr->add_option("--corpus", ta.corpus, "Corpus (.jsonl or .csv)")->required();
  tr->add_option("--venues", ta.venues, "Venue list (.jsonl)")->required();
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--variant", ta.variant, "baseline, recurrent or multikernel")->capture_default_str();
  tr->add_option("--encoder", ta.encoder, "Encoder kind, e.g. gru or bilstm");
  tr->add_option("--combo", ta.combo, "Feature combination, e.g. TAKS")->capture_default_str();
  tr->add_option("--seed", ta.seed, "Seed for split, init and shuffling")->capture_default_str();
  tr->add_option("--config", ta.config_path, "JSON model config overrides");
  tr->add_option("--scale", ta.scale, "desk or full layer widths")->capture_default_str();
  tr->add_option("--epochs", ta.epochs, "Maximum epochs");
  tr->add_option("--batch-size", ta.batch_size, "Minibatch size");
  tr->add_option("--lr", ta.lr, "Learning rate");
  tr->add_option("--optimizer", ta.optimizer, "adam or sgd");
  tr->add_option("--scope-mode", ta.scope_mode, "frozen_centroid or siamese");
  tr->add_option("--pipeline", ta.pipeline, "Preprocessing pipeline version");
  tr->add_option("--vectors", ta.vectors, "Pretrained word vectors (.vec)");
  tr->add_option("--split", ta.split, "train,validation,test ratios")->capture_default_str();
  tr->add_flag("--stratified", ta.stratified, "Split each venue separately");
  tr->add_flag("--trainable-embeddings", ta.trainable, "Fine-tune the embedding table");
  tr->add_flag("--frozen-embeddings", ta.frozen, "Keep the embedding table fixed");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a labelled corpus");
  std::string eval_model, eval_corpus;
  ev->add_option("--model", eval_model, "Checkpoint path")->required();
  ev->add_option("--corpus", eval_corpus, "Labelled corpus")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Feature-combination ablation over model kinds");
  std::string ab_corpus, ab_venues, ab_kinds = "baseline,gru,multikernel", ab_combos = "all", ab_format = "markdown";
  std::string ab_out, ab_cache, ab_split = "0.6,0.2,0.2";
  std::uint64_t ab_seed = 0;
  std::size_t ab_jobs = 1;
  std::optional<std::size_t> ab_epochs;
  bool ab_stratified = false;
  ab->add_option("--corpus", ab_corpus, "Corpus")->required();
  ab->add_option("--venues", ab_venues, "Venue list")->required();
  ab->add_option("--kinds", ab_kinds, "Comma-separated model kinds")->capture_default_str();
  ab->add_option("--combos", ab_combos, "Comma-separated combos or 'all'")->capture_default_str();
  ab->add_option("--seed", ab_seed, "Seed")->capture_default_str();
  ab->add_option("--format", ab_format, "markdown, csv or json")->capture_default_str();
  ab->add_option("--out", ab_out, "Report path (stdout when omitted)");
  ab->add_option("--cache-dir", ab_cache, "Per-cell result cache");
  ab->add_option("--jobs", ab_jobs, "Cells trained in parallel")->capture_default_str();
  ab->add_option("--epochs", ab_epochs, "Maximum epochs per cell");
  ab->add_option("--split", ab_split, "train,validation,test ratios")->capture_default_str();
  ab->add_flag("--stratified", ab_stratified, "Split each venue separately");

  // recommend
  auto* rec = app.add_subcommand("recommend", "Rank venues for one manuscript");
  std::string rec_model = default_model_path(), rec_title, rec_abstract, rec_keywords;
  std::optional<std::size_t> rec_k;
  bool rec_json = false;
  rec->add_option("--model", rec_model, "Checkpoint path (default $VENUERANK_MODEL)");
  rec->add_option("--title", rec_title, "Title");
  rec->add_option("--abstract", rec_abstract, "Abstract");
  rec->add_option("--keywords", rec_keywords, "Keywords separated by ';'");
  rec->add_option("--k", rec_k, "Number of venues (default 10, at most N)");
  rec->add_flag("--json", rec_json, "Print the service's JSON response instead of lines");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full architectures");
  std::string gc_variant = "all";
  std::size_t gc_seeds = 1;
  std::uint64_t gc_seed = 1;
  double gc_eps = kArchitectureGradEpsilon, gc_tol = 1e-4;
  gc->add_option("--variant", gc_variant, "baseline, recurrent, multikernel or all")->capture_default_str();
  gc->add_option("--seeds", gc_seeds, "Number of seeds per variant")->capture_default_str();
  gc->add_option("--seed", gc_seed, "First seed")->capture_default_str();
  gc->add_option("--epsilon", gc_eps, "Finite-difference step")->capture_default_str();
  gc->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP recommendation service");
  std::string sv_model = default_model_path(), sv_host = "127.0.0.1";
  int sv_port = 8080;
  sv->add_option("--model", sv_model, "Checkpoint path (default $VENUERANK_MODEL)");
  sv->add_option("--host", sv_host, "Bind address")->capture_default_str();
  sv->add_option("--port", sv_port, "Port (0 picks a free one)")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (*synth) return run_synth(out, synth_dir, so, synth_dim, synth_noise, synth_format);
    if (*tr) return run_train(out, err, ta);
    if (*ev) {
      const auto model = load_model(std::filesystem::path(eval_model));
      out << metrics_to_json(evaluate_model(model, read_docs(eval_corpus, err))).dump() << '\n';
      return 0;
    }
    if (*ab) {
      const auto format = as_usage([&] { return report_format_from_string(ab_format); });
      std::vector<FeatureCombo> combos;
      if (ab_combos == "all") {
        combos = FeatureCombo::canonical();
      } else {
        for (const auto& c : split_list(ab_combos)) combos.push_back(as_usage([&] { return FeatureCombo::parse(c); }));
      }
      const auto kinds = split_list(ab_kinds);
      for (const auto& k : kinds) as_usage([&] { return config_for_kind(k); });
      const auto ratios = parse_ratios(ab_split);
      auto docs = read_docs(ab_corpus, err);
      bool any_scope = false;
      for (const auto& c : combos) any_scope = any_scope || c.scope;
      auto venues = load_venues(ab_venues, {any_scope});
      validate_labels(docs, venues);
      const auto split = split_corpus(docs, {ratios, ab_seed, ab_stratified});
      AblationOptions opts;
      opts.seed = ab_seed;
      opts.cache_dir = ab_cache;
      opts.jobs = ab_jobs;
      if (ab_epochs) opts.adjust = [e = *ab_epochs](ModelConfig& c) { c.train.epochs = e; };
      opts.on_cell = [&](const ReportCell& c) {
        err << c.kind << ' ' << c.combo << (c.metrics ? " done" : " failed: " + c.error) << '\n';
      };
      const auto report = ablation_run(split, venues, kinds, combos, opts);
      if (ab_out.empty()) {
        out << render_report(report, format);
      } else {
        emit_report(report, format, ab_out);
      }
      return 0;
    }
    if (*rec) {
      if (rec_model.empty()) throw UsageError("recommend needs --model or VENUERANK_MODEL");
      json body = {{"title", rec_title}, {"abstract", rec_abstract}, {"keywords", split_keywords(rec_keywords)}};
      if (rec_k) body["k"] = *rec_k;
      const auto req = [&] {
        try {
          return parse_recommend_request(body);
        } catch (const RequestError& e) {
          throw UsageError(e.what());
        }
      }();
      const auto snap = load_snapshot(rec_model);
      json response;
      try {
        response = recommend_json(*snap, req);
      } catch (const RequestError& e) {
        throw UsageError(e.what());
      }
      if (rec_json) {
        out << response.dump() << '\n';
      } else {
        print_ranking(out, response);
      }
      return 0;
    }
    if (*gc) {
      std::vector<Variant> variants;
      if (gc_variant == "all") {
        variants = {Variant::baseline, Variant::recurrent, Variant::multikernel};
      } else {
        variants.push_back(as_usage([&] { return variant_from_string(gc_variant); }));
      }
      nn::GradCheckOptions opts;
      opts.epsilon = gc_eps;
      json checks = json::array();
      bool passed = true;
      for (auto v : variants) {
        for (std::size_t i = 0; i < gc_seeds; ++i) {
          const auto res = grad_check_architecture(v, gc_seed + i, opts);
          const bool ok = res.report.passes(gc_tol);
          passed = passed && ok;
          checks.push_back({{"architecture", res.label},
                            {"seed", gc_seed + i},
                            {"worst", res.report.worst()},
                            {"entries_checked", res.report.entries_checked},
                            {"max_rel_error", res.report.max_rel_error},
                            {"passed", ok}});
        }
      }
      out << json{{"epsilon", gc_eps}, {"tolerance", gc_tol}, {"passed", passed}, {"checks", checks}}.dump() << '\n';
      return passed ? 0 : 2;
    }
    if (*sv) return run_serve(out, sv_model, sv_host, sv_port);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace venuerank
