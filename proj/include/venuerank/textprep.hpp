#pragma once

// Text cleaning pipelines, feature combination, vocabulary and fixed-length
// encoding.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "venuerank/corpus.hpp"

namespace venuerank {

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::vector<std::string> words);

  /// The shipped English list (NLTK core list plus cardinal number words).
  static const StopwordList& english();
  /// One token per line; blank lines ignored.
  static StopwordList from_file(const std::filesystem::path& path);

  bool contains(std::string_view word) const;
  void add(std::string word);
  std::size_t size() const noexcept { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

/// Raw text of the shipped stopword file.
std::string_view shipped_stopword_text();
inline constexpr std::string_view kStopwordVersion = "en-v1";

/// Replaces crawl artifacts with spaces: literal escape runs such as
/// "â\x80\x93" or "Â\xa0", every non-ASCII code point and ASCII control bytes.
std::string strip_crawl_artifacts(std::string_view text);

/// Inserts a space wherever a lowercase ASCII letter is followed by an
/// uppercase one ("ArtificialIntelligence" -> "Artificial Intelligence").
std::string split_camel_case(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");
std::string to_lower_ascii(std::string_view text);

/// Lowercase; drop non-alphabetic words, single letters and stopwords;
/// collapse whitespace. Non-ASCII punctuation separates words.
std::string baseline_clean(std::string_view text,
                           const StopwordList& stopwords = StopwordList::english());

/// Strip crawl artifacts and non-letters, split camelCase, lowercase, drop
/// single letters and stopwords, collapse whitespace.
std::string enhanced_clean(std::string_view text,
                           const StopwordList& stopwords = StopwordList::english());

/// Remove $..$, $$..$$, \[..\], \(..\) spans and backslash commands with
/// their brace arguments. An unterminated span is removed through the end of
/// the text and counted in `unbalanced` when given.
std::string strip_latex(std::string_view text, std::size_t* unbalanced = nullptr);

/// Word-level tokenizer for the LaTeX pipeline: runs of letters/digits (and
/// non-ASCII bytes) form words, each ASCII punctuation mark is its own token.
std::vector<std::string> tokenize_words(std::string_view text);

// --- feature combinations ------------------------------------------------------

struct FeatureCombo {
  bool title = false;
  bool abstract = false;
  bool keywords = false;
  bool scope = false;

  /// Parses "T", "AKS", "TAKS", ... (letters in any order, no repeats).
  static FeatureCombo parse(std::string_view code);
  /// The 14 rows T, TS, K, KS, A, AS, TK, TKS, TA, TAS, AK, AKS, TAK, TAKS.
  static std::vector<FeatureCombo> canonical();

  /// Canonical code, letters ordered T, A, K, S.
  std::string code() const;
  void validate() const;
  FeatureCombo without_scope() const { return {title, abstract, keywords, false}; }

  friend bool operator==(const FeatureCombo&, const FeatureCombo&) = default;
};

/// Title, abstract and keywords (space-joined) in that order, enabled fields
/// only. Throws EmptyTextError if nothing but whitespace results.
std::string combine_features(const Document& doc, const FeatureCombo& combo);

/// Maximum sequence length per text-feature combination.
std::size_t max_len_for(const FeatureCombo& combo);

// --- vocabulary and encoding ---------------------------------------------------

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kCls = 2;
  static constexpr std::int32_t kSep = 3;
  static constexpr std::size_t kReserved = 4;

  /// Reserved entries only.
  Vocab();
  /// Reserved entries followed by `tokens` in order.
  explicit Vocab(const std::vector<std::string>& tokens);

  std::int32_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const noexcept { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

  /// One {"token": ..., "id": ...} object per line.
  void save_jsonl(std::ostream& out) const;
  static Vocab load_jsonl(std::istream& in);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.id_to_token_ == b.id_to_token_;
  }

 private:
  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Tokens with count >= min_count ordered by (count desc, token asc) after the
/// reserved ids. Throws ConfigError when nothing qualifies.
Vocab build_vocab(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_count);
/// Convenience overload over whitespace-separated texts.
Vocab build_vocab(const std::vector<std::string>& texts, std::size_t min_count);

struct TokenSequence {
  std::vector<std::string> tokens;  // tokens occupying real positions
  std::vector<std::int32_t> ids;    // length max_len
  std::vector<std::uint8_t> mask;   // 1 for real positions, then 0s
  std::size_t max_len = 0;

  /// Number of real (mask = 1) positions.
  std::size_t length() const noexcept { return tokens.size(); }
};

/// Unknown tokens map to UNK. With markers, CLS is prepended and SEP is the
/// last real token even after truncation. Overlong input keeps its head.
TokenSequence encode_pad(const std::vector<std::string>& tokens, const Vocab& vocab,
                         std::size_t max_len, bool add_markers);

// --- pipelines -----------------------------------------------------------------

enum class PipelineKind { baseline, enhanced, latex };

/// A named, versioned text-to-tokens pipeline. The version string is stored
/// in checkpoints and must match exactly at serving time.
struct Pipeline {
  PipelineKind kind = PipelineKind::enhanced;
  /// Only meaningful for the LaTeX pipeline (the others always lowercase).
  bool lowercase = true;

  std::vector<std::string> tokens(std::string_view text) const;
  std::string version() const;
  static Pipeline from_version(const std::string& version);

  friend bool operator==(const Pipeline&, const Pipeline&) = default;
};

/// Cleaned tokens of the combined feature text. Throws EmptyTextError
/// ("empty feature text") if the pipeline leaves nothing.
std::vector<std::string> feature_tokens(const Document& doc, const FeatureCombo& combo,
                                        const Pipeline& pipeline);

}  // namespace venuerank
