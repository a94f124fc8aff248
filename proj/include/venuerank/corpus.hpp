#pragma once

// Manuscript corpora and venue profiles: loading, validation, splitting and
// synthetic generation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace venuerank {

struct Document {
  std::string id;
  std::string title;
  std::string abstract;
  std::vector<std::string> keywords;
  std::optional<std::string> venue_id;

  friend bool operator==(const Document&, const Document&) = default;
};

struct VenueProfile {
  std::string venue_id;
  std::string name;
  std::string aims_scope;

  friend bool operator==(const VenueProfile&, const VenueProfile&) = default;
};

struct CorpusSplit {
  std::vector<Document> train;
  std::vector<Document> validation;
  std::vector<Document> test;
  std::uint64_t seed = 0;
};

enum class CorpusFormat { jsonl, csv };

CorpusFormat corpus_format_from_path(const std::filesystem::path& path);

struct LoadOptions {
  char keyword_delimiter = ';';
};

/// A record dropped at load time because its text is empty after cleaning.
struct RejectedDocument {
  std::string id;
  std::size_t line = 0;
  std::string reason;
};

struct CorpusLoad {
  std::vector<Document> documents;
  std::vector<RejectedDocument> rejected;
};

/// Reads a corpus. Malformed records raise ParseError with line and field;
/// duplicate ids raise ConfigError listing them.
CorpusLoad load_corpus(const std::filesystem::path& path, CorpusFormat format,
                       const LoadOptions& options = {});
void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& path,
                  CorpusFormat format, const LoadOptions& options = {});

struct VenueLoadOptions {
  /// Reject venues whose aims_scope is empty (needed when scope similarity is on).
  bool require_scope = false;
};

std::vector<VenueProfile> load_venues(const std::filesystem::path& path,
                                      const VenueLoadOptions& options = {});
void write_venues(const std::vector<VenueProfile>& venues, const std::filesystem::path& path);

/// Throws ConfigError if any labelled document names a venue not in `venues`.
void validate_labels(const std::vector<Document>& docs, const std::vector<VenueProfile>& venues);

struct SplitOptions {
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;
  /// Split each venue's documents separately so every class reaches every split.
  bool stratified = false;
};

/// Seeded shuffle then contiguous cut into train/validation/test.
CorpusSplit split_corpus(const std::vector<Document>& docs, const SplitOptions& options);

struct SynthOptions {
  std::size_t n_venues = 10;
  std::size_t docs_per_venue = 50;
  std::size_t vocab_size = 500;
  double signal_strength = 0.9;
  std::uint64_t seed = 0;
  std::size_t title_len = 8;
  std::size_t abstract_len = 40;
  std::size_t keyword_count = 4;
  std::size_t scope_len = 40;
};

struct SynthCorpus {
  std::vector<Document> documents;
  std::vector<VenueProfile> venues;
  /// Full word list; topic words of venue j occupy
  /// [j * topic_words_per_venue, (j + 1) * topic_words_per_venue).
  std::vector<std::string> vocabulary;
  std::size_t topic_words_per_venue = 0;
};

/// Planted-signal corpus: every token is drawn from the owning venue's topic
/// words with probability `signal_strength`, otherwise from the shared
/// general pool. Scope texts are drawn from the topic words only.
SynthCorpus synth_corpus(const SynthOptions& options);

/// Deterministic pronounceable pseudo-words that survive every cleaner.
std::vector<std::string> synth_words(std::size_t count, std::uint64_t seed);

}  // namespace venuerank
