#include "venuerank/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "venuerank/errors.hpp"

namespace venuerank {

namespace detail {
extern const char kStopwordText[];
}

namespace {

bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_alpha(char c) { return is_lower(c) || is_upper(c); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_hex(char c) { return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F'); }
bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

// Length of a UTF-8 sequence from its lead byte; malformed bytes count as 1.
std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;
}

// Number of bytes of a literal "\xHH\xHH..." run starting at i (0 if none).
std::size_t escape_run(std::string_view s, std::size_t i) {
  std::size_t j = i;
  while (j + 3 < s.size() && s[j] == '\\' && s[j + 1] == 'x' && is_hex(s[j + 2]) &&
         is_hex(s[j + 3])) {
    j += 4;
  }
  return j - i;
}

bool starts_with_bytes(std::string_view s, std::size_t i, std::string_view prefix) {
  return s.substr(i, prefix.size()) == prefix;
}

std::string filter_tokens(std::string_view text, const StopwordList& stopwords) {
  std::string out;
  for (const auto& tok : split_whitespace(text)) {
    if (tok.size() < 2 || stopwords.contains(tok)) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

}  // namespace

// --- stopwords -----------------------------------------------------------------

std::string_view shipped_stopword_text() { return detail::kStopwordText; }

StopwordList::StopwordList(std::vector<std::string> words) {
  for (auto& w : words) add(std::move(w));
}

const StopwordList& StopwordList::english() {
  static const StopwordList list(split_whitespace(shipped_stopword_text()));
  return list;
}

StopwordList StopwordList::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword file '" + path.string() + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_whitespace(line);
    if (!toks.empty()) words.push_back(toks.front());
  }
  return StopwordList(std::move(words));
}

bool StopwordList::contains(std::string_view word) const {
  return words_.count(std::string(word)) != 0;
}

void StopwordList::add(std::string word) {
  if (!word.empty()) words_.insert(to_lower_ascii(word));
}

// --- string helpers --------------------------------------------------------------

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join(const std::vector<std::string>& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (is_upper(c)) c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string strip_crawl_artifacts(std::string_view s) {
  // UTF-8 encodings of U+00E2 and U+00C2, the usual lead characters of
  // double-decoded punctuation.
  static constexpr std::string_view kLeadA = "\xC3\xA2";
  static constexpr std::string_view kLeadB = "\xC3\x82";
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t lead = 0;
    if (starts_with_bytes(s, i, kLeadA) || starts_with_bytes(s, i, kLeadB)) lead = 2;
    if (std::size_t run = escape_run(s, i + lead); run > 0) {
      out += ' ';
      i += lead + run;
      continue;
    }
    const auto c = static_cast<unsigned char>(s[i]);
    if (c >= 0x80) {
      out += ' ';
      i += std::max<std::size_t>(1, std::min(utf8_length(c), s.size() - i));
      continue;
    }
    out += (c < 0x20 || c == 0x7F) ? ' ' : static_cast<char>(c);
    ++i;
  }
  return out;
}

std::string split_camel_case(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 8);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i > 0 && is_lower(text[i - 1]) && is_upper(text[i])) out += ' ';
    out += text[i];
  }
  return out;
}

// --- cleaners --------------------------------------------------------------------

std::string baseline_clean(std::string_view text, const StopwordList& stopwords) {
  const std::string lowered = to_lower_ascii(strip_crawl_artifacts(text));
  std::string out;
  for (auto tok : split_whitespace(lowered)) {
    std::size_t b = 0, e = tok.size();
    while (b < e && is_ascii_punct(tok[b])) ++b;
    while (e > b && is_ascii_punct(tok[e - 1])) --e;
    std::string_view word(tok.data() + b, e - b);
    if (word.size() < 2) continue;
    if (!std::all_of(word.begin(), word.end(), is_lower)) continue;
    if (stopwords.contains(word)) continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::string enhanced_clean(std::string_view text, const StopwordList& stopwords) {
  std::string letters = strip_crawl_artifacts(text);
  for (auto& c : letters) {
    if (!is_alpha(c)) c = ' ';
  }
  return filter_tokens(to_lower_ascii(split_camel_case(letters)), stopwords);
}

namespace {

// Index just past a balanced {...} group starting at s[i] == '{', or npos.
std::size_t skip_brace_group(std::string_view s, std::size_t i) {
  int depth = 0;
  for (std::size_t j = i; j < s.size(); ++j) {
    if (s[j] == '\\' && j + 1 < s.size()) {
      ++j;
      continue;
    }
    if (s[j] == '{') ++depth;
    if (s[j] == '}' && --depth == 0) return j + 1;
  }
  return std::string_view::npos;
}

}  // namespace

std::string strip_latex(std::string_view s, std::size_t* unbalanced) {
  std::string out;
  out.reserve(s.size());
  std::size_t broken = 0;
  std::size_t i = 0;
  auto remove_until = [&](std::string_view closing, std::size_t from) {
    const std::size_t end = s.find(closing, from);
    if (end == std::string_view::npos) {
      ++broken;
      i = s.size();
    } else {
      i = end + closing.size();
    }
  };
  while (i < s.size()) {
    const char c = s[i];
    if (c == '$') {
      if (i + 1 < s.size() && s[i + 1] == '$') {
        remove_until("$$", i + 2);
      } else {
        remove_until("$", i + 1);
      }
      continue;
    }
    if (c == '\\') {
      if (i + 1 >= s.size()) {
        ++i;
        continue;
      }
      const char n = s[i + 1];
      if (n == '[') {
        remove_until("\\]", i + 2);
        continue;
      }
      if (n == '(') {
        remove_until("\\)", i + 2);
        continue;
      }
      if (is_alpha(n)) {
        std::size_t j = i + 1;
        while (j < s.size() && is_alpha(s[j])) ++j;
        while (j < s.size() && s[j] == '{') {
          const std::size_t end = skip_brace_group(s, j);
          if (end == std::string_view::npos) {
            ++broken;
            j = s.size();
            break;
          }
          j = end;
        }
        i = j;
        continue;
      }
      i += 2;  // escaped symbol such as \% or \\ .
      continue;
    }
    out += c;
    ++i;
  }
  if (unbalanced) *unbalanced += broken;
  return out;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c >= 0x80) {
      const std::size_t len = std::max<std::size_t>(1, std::min(utf8_length(c), text.size() - i));
      cur.append(text.substr(i, len));
      i += len;
    } else if (is_alpha(static_cast<char>(c)) || is_digit(static_cast<char>(c))) {
      cur += static_cast<char>(c);
      ++i;
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    } else {
      flush();
      ++i;
    }
  }
  flush();
  return out;
}

// --- feature combinations ----------------------------------------------------------

FeatureCombo FeatureCombo::parse(std::string_view code) {
  FeatureCombo fc;
  for (char ch : code) {
    bool* slot = nullptr;
    switch (ch) {
      case 'T': slot = &fc.title; break;
      case 'A': slot = &fc.abstract; break;
      case 'K': slot = &fc.keywords; break;
      case 'S': slot = &fc.scope; break;
      default:
        throw ConfigError("feature combination '" + std::string(code) +
                          "': unknown letter (use T, A, K, S)");
    }
    if (*slot) throw ConfigError("feature combination '" + std::string(code) + "' repeats a letter");
    *slot = true;
  }
  fc.validate();
  return fc;
}

std::vector<FeatureCombo> FeatureCombo::canonical() {
  std::vector<FeatureCombo> out;
  for (const char* base : {"T", "K", "A", "TK", "TA", "AK", "TAK"}) {
    auto fc = parse(base);
    out.push_back(fc);
    fc.scope = true;
    out.push_back(fc);
  }
  return out;
}

std::string FeatureCombo::code() const {
  std::string s;
  if (title) s += 'T';
  if (abstract) s += 'A';
  if (keywords) s += 'K';
  if (scope) s += 'S';
  return s;
}

void FeatureCombo::validate() const {
  if (!title && !abstract && !keywords) {
    throw ConfigError("feature combination needs at least one of title, abstract, keywords");
  }
}

std::string combine_features(const Document& doc, const FeatureCombo& combo) {
  combo.validate();
  std::vector<std::string> parts;
  auto push = [&](const std::string& s) {
    if (!split_whitespace(s).empty()) parts.push_back(s);
  };
  if (combo.title) push(doc.title);
  if (combo.abstract) push(doc.abstract);
  if (combo.keywords) push(join(doc.keywords));
  if (parts.empty()) throw EmptyTextError("empty feature text");
  return join(parts);
}

std::size_t max_len_for(const FeatureCombo& combo) {
  combo.validate();
  if (combo.abstract) return 512;
  if (combo.title && combo.keywords) return 256;
  return 128;
}

// --- vocabulary ----------------------------------------------------------------------

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) {
  id_to_token_ = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    token_to_id_.emplace(id_to_token_[i], static_cast<std::int32_t>(i));
  }
  for (const auto& t : tokens) {
    if (token_to_id_.count(t)) throw ConfigError("vocabulary token '" + t + "' appears twice");
    token_to_id_.emplace(t, static_cast<std::int32_t>(id_to_token_.size()));
    id_to_token_.push_back(t);
  }
}

std::int32_t Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ConfigError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocab::save_jsonl(std::ostream& out) const {
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    out << nlohmann::json{{"token", id_to_token_[i]}, {"id", i}}.dump() << '\n';
  }
}

Vocab Vocab::load_jsonl(std::istream& in) {
  std::map<std::int64_t, std::string> by_id;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_whitespace(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      by_id[j.at("id").get<std::int64_t>()] = j.at("token").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad vocabulary record: ") + e.what(), lineno);
    }
  }
  std::vector<std::string> tokens;
  std::int64_t expect = 0;
  for (auto& [id, tok] : by_id) {
    if (id != expect) throw ParseError("vocabulary ids are not contiguous at " + std::to_string(id));
    if (id >= static_cast<std::int64_t>(kReserved)) tokens.push_back(tok);
    ++expect;
  }
  if (expect < static_cast<std::int64_t>(kReserved)) throw ParseError("vocabulary lacks reserved ids");
  return Vocab(tokens);
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& toks : token_lists) {
    for (const auto& t : toks) ++counts[t];
  }
  const Vocab reserved;
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && !reserved.contains(tok)) kept.emplace_back(tok, n);
  }
  if (kept.empty()) throw ConfigError("empty vocabulary (no token reaches min_count)");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocab(tokens);
}

Vocab build_vocab(const std::vector<std::string>& texts, std::size_t min_count) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(texts.size());
  for (const auto& t : texts) lists.push_back(split_whitespace(t));
  return build_vocab(lists, min_count);
}

TokenSequence encode_pad(const std::vector<std::string>& tokens, const Vocab& vocab,
                         std::size_t max_len, bool add_markers) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (add_markers && max_len < 3) throw ConfigError("max_len must be >= 3 when markers are added");
  TokenSequence seq;
  seq.max_len = max_len;
  const std::size_t capacity = add_markers ? max_len - 2 : max_len;
  const std::size_t body = std::min(capacity, tokens.size());
  if (add_markers) seq.tokens.push_back(vocab.token(Vocab::kCls));
  seq.tokens.insert(seq.tokens.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(body));
  if (add_markers) seq.tokens.push_back(vocab.token(Vocab::kSep));

  seq.ids.assign(max_len, Vocab::kPad);
  seq.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    seq.mask[i] = 1;
    seq.ids[i] = vocab.id(seq.tokens[i]);
  }
  return seq;
}

// --- pipelines -----------------------------------------------------------------------

std::vector<std::string> Pipeline::tokens(std::string_view text) const {
  switch (kind) {
    case PipelineKind::baseline:
      return split_whitespace(baseline_clean(text));
    case PipelineKind::enhanced:
      return split_whitespace(enhanced_clean(text));
    case PipelineKind::latex: {
      auto toks = tokenize_words(strip_latex(text));
      if (lowercase) {
        for (auto& t : toks) t = to_lower_ascii(t);
      }
      return toks;
    }
  }
  return {};
}

std::string Pipeline::version() const {
  const std::string sw = "+sw-" + std::string(kStopwordVersion);
  switch (kind) {
    case PipelineKind::baseline: return "baseline-v1" + sw;
    case PipelineKind::enhanced: return "enhanced-v1" + sw;
    case PipelineKind::latex: return lowercase ? "latex-v1-uncased" : "latex-v1-cased";
  }
  return {};
}

Pipeline Pipeline::from_version(const std::string& version) {
  for (const Pipeline& p : {Pipeline{PipelineKind::baseline, true}, Pipeline{PipelineKind::enhanced, true},
                            Pipeline{PipelineKind::latex, true}, Pipeline{PipelineKind::latex, false}}) {
    if (p.version() == version) return p;
  }
  throw ConfigError("unsupported preprocessing pipeline version '" + version + "'");
}

std::vector<std::string> feature_tokens(const Document& doc, const FeatureCombo& combo,
                                        const Pipeline& pipeline) {
  auto toks = pipeline.tokens(combine_features(doc, combo));
  if (toks.empty()) throw EmptyTextError("empty feature text");
  return toks;
}

}  // namespace venuerank
