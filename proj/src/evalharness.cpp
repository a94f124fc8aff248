#include "venuerank/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "venuerank/errors.hpp"

namespace venuerank {

using nlohmann::json;

namespace {

void check_inputs(const std::vector<Ranking>& predictions, const std::vector<std::string>& labels,
                  std::size_t k) {
  if (predictions.size() != labels.size()) {
    throw ConfigError("metric: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw ConfigError("metric: no samples");
  if (k == 0) throw ConfigError("metric: k must be >= 1");
  for (const auto& p : predictions) {
    if (p.size() < k) {
      throw ConfigError("metric: ranking of length " + std::to_string(p.size()) + " shorter than k = " +
                        std::to_string(k));
    }
  }
}

bool in_top_k(const Ranking& r, const std::string& id, std::size_t k) {
  return std::find(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), id) != r.begin() + static_cast<std::ptrdiff_t>(k);
}

}  // namespace

double hitrate_at_k(const std::vector<Ranking>& predictions, const std::vector<std::string>& labels,
                    std::size_t k) {
  check_inputs(predictions, labels, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (in_top_k(predictions[i], labels[i], k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double macro_accuracy_at_k(const std::vector<Ranking>& predictions, const std::vector<std::string>& labels,
                           std::size_t k, const std::vector<std::string>& classes) {
  check_inputs(predictions, labels, k);
  if (classes.empty()) throw ConfigError("metric: no classes");
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t c = 0; c < classes.size(); ++c) idx.emplace(classes[c], c);
  const std::size_t N = classes.size();
  // correct[c] = TP + TN for class c.
  std::vector<std::size_t> correct(N, 0);
  std::vector<std::uint8_t> positive(N);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::fill(positive.begin(), positive.end(), 0);
    for (std::size_t r = 0; r < k; ++r) {
      auto it = idx.find(predictions[i][r]);
      if (it != idx.end()) positive[it->second] = 1;
    }
    auto lab = idx.find(labels[i]);
    const std::size_t truth = lab == idx.end() ? N : lab->second;
    for (std::size_t c = 0; c < N; ++c) {
      const bool actual = c == truth;
      if (actual == static_cast<bool>(positive[c])) ++correct[c];
    }
  }
  double sum = 0.0;
  for (auto v : correct) sum += static_cast<double>(v) / static_cast<double>(labels.size());
  return sum / static_cast<double>(N);
}

CellMetrics evaluate_model(const TrainedModel& model, const std::vector<Document>& docs) {
  std::shared_ptr<const TrainedModel> alias(std::shared_ptr<const TrainedModel>{}, &model);
  const Predictor predictor(alias);
  const std::size_t N = model.venues.size();
  std::vector<Ranking> preds;
  std::vector<std::string> labels;
  for (const auto& doc : docs) {
    if (!doc.venue_id) continue;
    Prediction p;
    try {
      p = predictor.predict(doc, N);
    } catch (const EmptyTextError&) {
      continue;
    }
    Ranking r;
    for (const auto& rv : p.ranked) r.push_back(rv.venue_id);
    preds.push_back(std::move(r));
    labels.push_back(*doc.venue_id);
  }
  if (preds.empty()) throw ConfigError("no evaluable documents");
  CellMetrics m;
  m.test_documents = preds.size();
  const auto classes = model.venue_ids();
  for (std::size_t i = 0; i < kReportKs.size(); ++i) {
    const std::size_t k = std::min(kReportKs[i], N);
    m.hitrate[i] = hitrate_at_k(preds, labels, k);
    m.macro[i] = macro_accuracy_at_k(preds, labels, k, classes);
  }
  return m;
}

ModelConfig config_for_kind(const std::string& kind, bool desk_scale) {
  auto base = [&](Variant v) { return desk_scale ? ModelConfig::desk(v) : ModelConfig::defaults(v); };
  if (kind == "baseline") return base(Variant::baseline);
  if (kind == "multikernel") return base(Variant::multikernel);
  if (kind == "lstm" || kind == "bilstm" || kind == "gru" || kind == "bigru") {
    ModelConfig c = base(Variant::recurrent);
    c.encoder.kind = encoder_kind_from_string(kind);
    return c;
  }
  throw ConfigError("unknown model kind '" + kind + "'");
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_docs(const std::vector<Document>& docs, std::uint64_t h) {
  for (const auto& d : docs) {
    h = fnv1a(d.id, h);
    h = fnv1a("\x1f", h);
    h = fnv1a(d.title, h);
    h = fnv1a("\x1f", h);
    h = fnv1a(d.abstract, h);
    for (const auto& k : d.keywords) h = fnv1a("\x1f" + k, h);
    h = fnv1a("\x1e" + d.venue_id.value_or(""), h);
  }
  return fnv1a("\x1d", h);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json metrics_json(const CellMetrics& m) {
  return {{"hitrate", m.hitrate}, {"macro", m.macro}, {"test_documents", m.test_documents}};
}

CellMetrics metrics_from_json(const json& j) {
  CellMetrics m;
  m.hitrate = j.at("hitrate").get<std::array<double, 4>>();
  m.macro = j.at("macro").get<std::array<double, 4>>();
  m.test_documents = j.value("test_documents", std::size_t{0});
  return m;
}

}  // namespace

std::string corpus_fingerprint(const CorpusSplit& split, const std::vector<VenueProfile>& venues) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = hash_docs(split.train, h);
  h = hash_docs(split.validation, h);
  h = hash_docs(split.test, h);
  for (const auto& v : venues) {
    h = fnv1a(v.venue_id + "\x1f" + v.name + "\x1f" + v.aims_scope + "\x1e", h);
  }
  return hex64(h);
}

EvalReport ablation_run(const CorpusSplit& split, const std::vector<VenueProfile>& venues,
                        const std::vector<std::string>& kinds, const std::vector<FeatureCombo>& combos,
                        const AblationOptions& options) {
  EvalReport report;
  report.corpus_id = corpus_fingerprint(split, venues);
  report.seed = options.seed;
  report.created_at = utc_now();
  for (const auto& kind : kinds) {
    config_for_kind(kind);  // reject unknown kinds before any training
    for (const auto& combo : combos) {
      combo.validate();
      report.cells.push_back({kind, combo.code(), std::nullopt, {}});
    }
  }
  if (!options.cache_dir.empty()) std::filesystem::create_directories(options.cache_dir);

  std::mutex mu;
  auto run_cell = [&](ReportCell& cell) {
    try {
      ModelConfig config = config_for_kind(cell.kind);
      config.combo = FeatureCombo::parse(cell.combo);
      config.train.seed = options.seed;
      config.n_venues = venues.size();
      if (options.adjust) options.adjust(config);
      std::filesystem::path cache_file;
      if (!options.cache_dir.empty()) {
        std::uint64_t h = fnv1a(to_json(config).dump());
        h = fnv1a(report.corpus_id, h);
        h = fnv1a(std::to_string(options.seed), h);
        cache_file = options.cache_dir / (hex64(h) + ".json");
        std::ifstream in(cache_file);
        if (in) {
          try {
            cell.metrics = metrics_from_json(json::parse(in));
          } catch (const std::exception&) {
            cell.metrics.reset();  // unreadable cache entry: recompute
          }
        }
      }
      if (!cell.metrics) {
        TrainedModel model = build_model(config, venues, split.train, options.seed);
        train(model, split);
        cell.metrics = evaluate_model(model, split.test.empty() ? split.validation : split.test);
        if (!cache_file.empty()) {
          std::ofstream out(cache_file, std::ios::trunc);
          out << metrics_json(*cell.metrics).dump() << '\n';
        }
      }
    } catch (const std::exception& e) {
      cell.metrics.reset();
      cell.error = e.what();
    }
    if (options.on_cell) {
      std::lock_guard<std::mutex> lock(mu);
      options.on_cell(cell);
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, report.cells.size()));
  if (jobs == 1) {
    for (auto& cell : report.cells) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < report.cells.size();) run_cell(report.cells[i]);
      });
    }
    for (auto& t : workers) t.join();
  }
  return report;
}

// --- emission ------------------------------------------------------------------

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("unknown report format '" + s + "' (expected markdown, csv or json)");
}

json report_to_json(const EvalReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json j = {{"kind", c.kind}, {"combo", c.combo}};
    if (c.metrics) {
      j.update(metrics_json(*c.metrics));
    }
    if (!c.error.empty()) j["error"] = c.error;
    cells.push_back(std::move(j));
  }
  return {{"schema_version", EvalReport::kSchemaVersion},
          {"corpus_id", report.corpus_id},
          {"seed", report.seed},
          {"created_at", report.created_at},
          {"ks", kReportKs},
          {"cells", cells}};
}

EvalReport report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != EvalReport::kSchemaVersion) {
      throw ConfigError("unsupported report schema version");
    }
    EvalReport r;
    r.corpus_id = j.at("corpus_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.created_at = j.value("created_at", std::string());
    for (const auto& c : j.at("cells")) {
      ReportCell cell{c.at("kind").get<std::string>(), c.at("combo").get<std::string>(), std::nullopt,
                      c.value("error", std::string())};
      if (c.contains("hitrate")) cell.metrics = metrics_from_json(c);
      r.cells.push_back(std::move(cell));
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report json: ") + e.what());
  }
}

namespace {

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void markdown_table(std::ostringstream& out, const std::vector<const ReportCell*>& rows, bool macro) {
  out << "| Combo | Top1 | Top3 | Top5 | Top10 |\n";
  out << "|---|---|---|---|---|\n";
  auto value = [&](const ReportCell* c, std::size_t i) {
    return macro ? c->metrics->macro[i] : c->metrics->hitrate[i];
  };
  for (const ReportCell* c : rows) {
    // Partner row: the same combo with scope toggled.
    FeatureCombo fc = FeatureCombo::parse(c->combo);
    FeatureCombo other = fc;
    other.scope = !fc.scope;
    const ReportCell* partner = nullptr;
    for (const ReportCell* r : rows) {
      if (r->combo == other.code()) partner = r;
    }
    out << "| " << c->combo;
    for (std::size_t i = 0; i < kReportKs.size(); ++i) {
      if (!c->metrics) {
        out << " | error";
        continue;
      }
      const std::string v = fmt4(value(c, i));
      bool bold = false;
      if (partner && partner->metrics) {
        // Compare at the printed precision so a visible tie bolds both.
        bold = std::stod(v) >= std::stod(fmt4(value(partner, i)));
      }
      out << " | " << (bold ? "**" + v + "**" : v);
    }
    out << " |\n";
  }
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::json:
      out << report_to_json(report).dump(2) << '\n';
      break;
    case ReportFormat::csv:
      out << "kind,combo,metric,top1,top3,top5,top10,test_documents,error\n";
      for (const auto& c : report.cells) {
        for (const char* metric : {"hitrate", "macro"}) {
          out << c.kind << ',' << c.combo << ',' << metric;
          if (c.metrics) {
            const auto& vals = std::string(metric) == "macro" ? c.metrics->macro : c.metrics->hitrate;
            for (double v : vals) out << ',' << fmt4(v);
            out << ',' << c.metrics->test_documents << ",";
          } else {
            std::string err = c.error;
            std::replace(err.begin(), err.end(), '"', '\'');
            out << ",,,,,,\"" << err << '"';
          }
          out << '\n';
        }
      }
      break;
    case ReportFormat::markdown: {
      out << "# Evaluation report\n\n";
      out << "corpus " << report.corpus_id << ", seed " << report.seed << "\n\n";
      if (report.cells.empty()) {
        out << "| Combo | Top1 | Top3 | Top5 | Top10 |\n|---|---|---|---|---|\n\n_no cells_\n";
        break;
      }
      std::vector<std::string> kinds;
      for (const auto& c : report.cells) {
        if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) kinds.push_back(c.kind);
      }
      for (const auto& kind : kinds) {
        std::vector<const ReportCell*> rows;
        for (const auto& c : report.cells) {
          if (c.kind == kind) rows.push_back(&c);
        }
        out << "## " << kind << ": hit rate\n\n";
        markdown_table(out, rows, false);
        out << "\n## " << kind << ": macro accuracy\n\n";
        markdown_table(out, rows, true);
        out << '\n';
        for (const ReportCell* c : rows) {
          if (!c->error.empty()) out << "- " << c->combo << " failed: " << c->error << '\n';
        }
      }
      break;
    }
  }
  return out.str();
}

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << render_report(report, format);
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace venuerank
