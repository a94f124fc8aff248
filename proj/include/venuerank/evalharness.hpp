#pragma once

// Accuracy@K in two readings, the feature-combination ablation runner and
// report emission.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "venuerank/corpus.hpp"
#include "venuerank/recmodel.hpp"

namespace venuerank {

using Ranking = std::vector<std::string>;

/// Fraction of samples whose label is among the first k entries of its
/// ranking. Throws ConfigError on a length mismatch, no samples, k = 0 or a
/// ranking shorter than k.
double hitrate_at_k(const std::vector<Ranking>& predictions, const std::vector<std::string>& labels,
                    std::size_t k);

/// Per-class accuracy (TP + TN) / (TP + TN + FP + FN), where a sample is
/// predicted positive for class i iff i is in its top k, averaged over all
/// classes. TN counts samples that are neither labelled nor predicted i.
double macro_accuracy_at_k(const std::vector<Ranking>& predictions, const std::vector<std::string>& labels,
                           std::size_t k, const std::vector<std::string>& classes);

inline constexpr std::array<std::size_t, 4> kReportKs{1, 3, 5, 10};

struct CellMetrics {
  std::array<double, 4> hitrate{};  // at kReportKs, k clamped to N
  std::array<double, 4> macro{};
  std::size_t test_documents = 0;
  friend bool operator==(const CellMetrics&, const CellMetrics&) = default;
};

struct ReportCell {
  std::string kind;   // baseline, lstm, bilstm, gru, bigru, multikernel
  std::string combo;  // canonical code
  std::optional<CellMetrics> metrics;
  std::string error;  // set when the cell failed
  friend bool operator==(const ReportCell&, const ReportCell&) = default;
};

struct EvalReport {
  static constexpr int kSchemaVersion = 1;
  std::string corpus_id;
  std::uint64_t seed = 0;
  std::string created_at;
  std::vector<ReportCell> cells;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Ranks every test document with the model and scores it at kReportKs.
/// Documents whose features clean to nothing are left out.
CellMetrics evaluate_model(const TrainedModel& model, const std::vector<Document>& docs);

/// Model kind name to a config: "baseline", "multikernel" or one of the
/// recurrent cells ("lstm", "bilstm", "gru", "bigru").
ModelConfig config_for_kind(const std::string& kind, bool desk_scale = true);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string corpus_fingerprint(const CorpusSplit& split, const std::vector<VenueProfile>& venues);

struct AblationOptions {
  std::uint64_t seed = 0;
  /// Cell results are cached here as <hash>.json when non-empty.
  std::filesystem::path cache_dir;
  std::size_t jobs = 1;
  /// Applied to every cell's config after the kind and combo are set.
  std::function<void(ModelConfig&)> adjust;
  std::function<void(const ReportCell&)> on_cell;
};

/// Trains and evaluates one model per (kind, combo) cell. A failing cell
/// records its error and the run continues.
EvalReport ablation_run(const CorpusSplit& split, const std::vector<VenueProfile>& venues,
                        const std::vector<std::string>& kinds, const std::vector<FeatureCombo>& combos,
                        const AblationOptions& options);

enum class ReportFormat { markdown, csv, json };
ReportFormat report_format_from_string(const std::string& s);

std::string render_report(const EvalReport& report, ReportFormat format);
void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace venuerank
