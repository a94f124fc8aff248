#include "venuerank/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "venuerank/errors.hpp"
#include "venuerank/rng.hpp"
#include "venuerank/textprep.hpp"

namespace venuerank {

using nlohmann::json;

CorpusFormat corpus_format_from_path(const std::filesystem::path& path) {
  const auto ext = to_lower_ascii(path.extension().string());
  if (ext == ".csv") return CorpusFormat::csv;
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return CorpusFormat::jsonl;
  throw ConfigError("cannot infer corpus format from '" + path.string() + "' (use .jsonl or .csv)");
}

namespace {

std::vector<std::string> split_keywords(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    auto toks = split_whitespace(cur);
    if (!toks.empty()) out.push_back(join(toks));
    cur.clear();
  };
  for (char c : s) {
    if (c == delim) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

std::string require_string(const json& obj, const char* key, std::size_t line, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw ParseError(std::string("missing field '") + key + "'", line, key);
    return {};
  }
  if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string", line, key);
  return it->get<std::string>();
}

// A record is kept only if some text field survives cleaning.
bool has_text(const Document& d) {
  std::string all = d.title + " " + d.abstract + " " + join(d.keywords);
  return !enhanced_clean(all).empty();
}

void check_unique_ids(const std::vector<Document>& docs) {
  std::unordered_set<std::string> seen;
  std::set<std::string> dups;
  for (const auto& d : docs) {
    if (!seen.insert(d.id).second) dups.insert(d.id);
  }
  if (!dups.empty()) {
    std::string list;
    for (const auto& id : dups) list += (list.empty() ? "" : ", ") + id;
    throw ConfigError("duplicate document id(s): " + list);
  }
}

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

// RFC 4180: quoted fields may contain separators, doubled quotes and newlines.
std::vector<CsvRecord> parse_csv(std::istream& in) {
  std::vector<CsvRecord> records;
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool in_quotes = false;
    bool done = false;
    while (!done) {
      if (i >= text.size()) {
        if (in_quotes) throw ParseError("unterminated quoted field", rec.line);
        rec.fields.push_back(std::move(field));
        done = true;
        break;
      }
      const char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            i += 2;
          } else {
            in_quotes = false;
            ++i;
          }
        } else {
          if (c == '\n') ++line;
          field += c;
          ++i;
        }
        continue;
      }
      if (c == '"' && field.empty()) {
        in_quotes = true;
        ++i;
      } else if (c == ',') {
        rec.fields.push_back(std::move(field));
        field.clear();
        ++i;
      } else if (c == '\n' || c == '\r') {
        rec.fields.push_back(std::move(field));
        if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
        ++i;
        ++line;
        done = true;
      } else {
        field += c;
        ++i;
      }
    }
    const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank) records.push_back(std::move(rec));
  }
  return records;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

CorpusLoad load_jsonl(std::istream& in, const LoadOptions& options) {
  CorpusLoad result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_whitespace(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!obj.is_object()) throw ParseError("record is not a JSON object", lineno);
    Document d;
    d.id = require_string(obj, "id", lineno, true);
    if (d.id.empty()) throw ParseError("field 'id' is empty", lineno, "id");
    d.title = require_string(obj, "title", lineno, true);
    d.abstract = require_string(obj, "abstract", lineno, true);
    auto kw = obj.find("keywords");
    if (kw == obj.end()) throw ParseError("missing field 'keywords'", lineno, "keywords");
    if (kw->is_array()) {
      for (const auto& k : *kw) {
        if (!k.is_string()) throw ParseError("keywords must be strings", lineno, "keywords");
        d.keywords.push_back(k.get<std::string>());
      }
    } else if (kw->is_string()) {
      d.keywords = split_keywords(kw->get<std::string>(), options.keyword_delimiter);
    } else if (!kw->is_null()) {
      throw ParseError("field 'keywords' must be a list of strings", lineno, "keywords");
    }
    auto v = require_string(obj, "venue_id", lineno, false);
    if (!v.empty()) d.venue_id = v;
    if (has_text(d)) {
      result.documents.push_back(std::move(d));
    } else {
      result.rejected.push_back({d.id, lineno, "empty text after cleaning"});
    }
  }
  return result;
}

CorpusLoad load_csv(std::istream& in, const LoadOptions& options) {
  auto records = parse_csv(in);
  if (records.empty()) throw ParseError("csv file has no header row");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < records[0].fields.size(); ++i) {
    col[join(split_whitespace(records[0].fields[i]))] = i;
  }
  for (const char* required : {"id", "title", "abstract", "keywords"}) {
    if (!col.count(required)) {
      throw ParseError(std::string("csv header lacks column '") + required + "'", 1, required);
    }
  }
  const bool has_venue = col.count("venue_id") != 0;
  CorpusLoad result;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != records[0].fields.size()) {
      throw ParseError("expected " + std::to_string(records[0].fields.size()) + " fields, got " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    }
    Document d;
    d.id = rec.fields[col["id"]];
    if (d.id.empty()) throw ParseError("field 'id' is empty", rec.line, "id");
    d.title = rec.fields[col["title"]];
    d.abstract = rec.fields[col["abstract"]];
    d.keywords = split_keywords(rec.fields[col["keywords"]], options.keyword_delimiter);
    if (has_venue && !rec.fields[col["venue_id"]].empty()) d.venue_id = rec.fields[col["venue_id"]];
    if (has_text(d)) {
      result.documents.push_back(std::move(d));
    } else {
      result.rejected.push_back({d.id, rec.line, "empty text after cleaning"});
    }
  }
  return result;
}

}  // namespace

CorpusLoad load_corpus(const std::filesystem::path& path, CorpusFormat format,
                       const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus '" + path.string() + "'");
  CorpusLoad result = format == CorpusFormat::jsonl ? load_jsonl(in, options) : load_csv(in, options);
  std::vector<Document> all = result.documents;
  for (const auto& r : result.rejected) all.push_back(Document{r.id, {}, {}, {}, {}});
  check_unique_ids(all);
  return result;
}

void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& path,
                  CorpusFormat format, const LoadOptions& options) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  if (format == CorpusFormat::jsonl) {
    for (const auto& d : docs) {
      json j = {{"id", d.id}, {"title", d.title}, {"abstract", d.abstract}, {"keywords", d.keywords}};
      if (d.venue_id) j["venue_id"] = *d.venue_id;
      out << j.dump() << '\n';
    }
    return;
  }
  const std::string delim(1, options.keyword_delimiter);
  out << "id,title,abstract,keywords,venue_id\n";
  for (const auto& d : docs) {
    for (const auto& k : d.keywords) {
      if (k.find(options.keyword_delimiter) != std::string::npos) {
        throw ConfigError("keyword '" + k + "' contains the csv keyword delimiter");
      }
    }
    out << csv_quote(d.id) << ',' << csv_quote(d.title) << ',' << csv_quote(d.abstract) << ','
        << csv_quote(join(d.keywords, delim)) << ',' << csv_quote(d.venue_id.value_or("")) << '\n';
  }
}

std::vector<VenueProfile> load_venues(const std::filesystem::path& path,
                                      const VenueLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open venue file '" + path.string() + "'");
  std::vector<VenueProfile> venues;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_whitespace(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    VenueProfile v;
    v.venue_id = require_string(obj, "venue_id", lineno, true);
    if (v.venue_id.empty()) throw ParseError("field 'venue_id' is empty", lineno, "venue_id");
    v.name = require_string(obj, "name", lineno, false);
    v.aims_scope = require_string(obj, "aims_scope", lineno, false);
    if (!seen.insert(v.venue_id).second) {
      throw ConfigError("duplicate venue_id '" + v.venue_id + "' at line " + std::to_string(lineno));
    }
    if (options.require_scope && split_whitespace(v.aims_scope).empty()) {
      throw ConfigError("venue '" + v.venue_id + "' has empty aims_scope");
    }
    venues.push_back(std::move(v));
  }
  if (venues.empty()) throw ConfigError("no venues");
  return venues;
}

void write_venues(const std::vector<VenueProfile>& venues, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (const auto& v : venues) {
    out << json{{"venue_id", v.venue_id}, {"name", v.name}, {"aims_scope", v.aims_scope}}.dump()
        << '\n';
  }
}

void validate_labels(const std::vector<Document>& docs, const std::vector<VenueProfile>& venues) {
  std::unordered_set<std::string> ids;
  for (const auto& v : venues) ids.insert(v.venue_id);
  std::set<std::string> unknown;
  for (const auto& d : docs) {
    if (d.venue_id && !ids.count(*d.venue_id)) unknown.insert(*d.venue_id);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& id : unknown) list += (list.empty() ? "" : ", ") + id;
    throw ConfigError("documents reference unknown venue(s): " + list);
  }
}

// --- splitting ---------------------------------------------------------------

namespace {

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& r) {
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r[0]));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r[1]));
  const std::size_t head = std::min(n, n_train + n_val);
  return {std::min(n_train, n), head - std::min(n_train, n), n - head};
}

void cut(std::vector<Document> docs, const std::array<std::size_t, 3>& sizes, CorpusSplit& out) {
  auto b = docs.begin();
  out.train.insert(out.train.end(), b, b + static_cast<std::ptrdiff_t>(sizes[0]));
  b += static_cast<std::ptrdiff_t>(sizes[0]);
  out.validation.insert(out.validation.end(), b, b + static_cast<std::ptrdiff_t>(sizes[1]));
  b += static_cast<std::ptrdiff_t>(sizes[1]);
  out.test.insert(out.test.end(), b, docs.end());
}

}  // namespace

CorpusSplit split_corpus(const std::vector<Document>& docs, const SplitOptions& options) {
  const auto& r = options.ratios;
  for (double x : r) {
    if (!(x > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (docs.size() < 5) {
    throw ConfigError("corpus too small to split (" + std::to_string(docs.size()) + " documents, need 5)");
  }
  CorpusSplit split;
  split.seed = options.seed;
  Rng rng(options.seed);

  if (!options.stratified) {
    auto sizes = split_sizes(docs.size(), r);
    if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) {
      throw ConfigError("corpus too small for three nonempty splits");
    }
    std::vector<Document> shuffled = docs;
    rng.shuffle(shuffled);
    cut(std::move(shuffled), sizes, split);
    return split;
  }

  std::map<std::string, std::vector<Document>> groups;
  for (const auto& d : docs) groups[d.venue_id.value_or("")].push_back(d);
  for (auto& [venue, members] : groups) {
    rng.shuffle(members);
    cut(members, split_sizes(members.size(), r), split);
  }
  if (split.train.empty() || split.validation.empty() || split.test.empty()) {
    throw ConfigError("corpus too small for three nonempty stratified splits");
  }
  rng.shuffle(split.train);
  rng.shuffle(split.validation);
  rng.shuffle(split.test);
  return split;
}

// --- synthetic corpora ----------------------------------------------------------

std::vector<std::string> synth_words(std::size_t count, std::uint64_t seed) {
  static constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                                 "r", "s", "t", "v", "z", "br", "tr", "st", "pl"};
  static constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u"};
  Rng rng(seed ^ 0x5EEDF00DULL);
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  const auto& stop = StopwordList::english();
  while (words.size() < count) {
    const std::size_t syllables = 2 + rng.index(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng.index(std::size(kOnsets))];
      w += kVowels[rng.index(std::size(kVowels))];
    }
    if (stop.contains(w) || !seen.insert(w).second) continue;
    words.push_back(std::move(w));
  }
  return words;
}

SynthCorpus synth_corpus(const SynthOptions& o) {
  if (o.n_venues < 2) throw ConfigError("synth_corpus: n_venues must be >= 2");
  if (o.docs_per_venue < 1) throw ConfigError("synth_corpus: docs_per_venue must be >= 1");
  if (o.vocab_size < 10 * o.n_venues) {
    throw ConfigError("synth_corpus: vocab_size must be >= 10 * n_venues");
  }
  if (!(o.signal_strength >= 0.0 && o.signal_strength <= 1.0)) {
    throw ConfigError("synth_corpus: signal_strength must be in [0, 1]");
  }
  if (o.title_len == 0 || o.abstract_len == 0 || o.keyword_count == 0 || o.scope_len == 0) {
    throw ConfigError("synth_corpus: text lengths must be positive");
  }

  SynthCorpus sc;
  sc.vocabulary = synth_words(o.vocab_size, o.seed);
  sc.topic_words_per_venue = o.vocab_size / (2 * o.n_venues);
  const std::size_t t = sc.topic_words_per_venue;
  const std::size_t general_begin = o.n_venues * t;
  const std::size_t general_size = o.vocab_size - general_begin;
  Rng rng(o.seed);

  auto topic_word = [&](std::size_t venue) -> const std::string& {
    return sc.vocabulary[venue * t + rng.index(t)];
  };
  auto draw = [&](std::size_t venue) -> const std::string& {
    if (rng.uniform() < o.signal_strength) return topic_word(venue);
    return sc.vocabulary[general_begin + rng.index(general_size)];
  };
  auto jitter = [&](std::size_t base) {
    const std::size_t lo = std::max<std::size_t>(1, base - base / 4);
    return lo + rng.index(base / 2 + 1);
  };
  auto capitalised = [](std::string w) {
    w[0] = static_cast<char>(w[0] - 'a' + 'A');
    return w;
  };

  const std::size_t width = std::to_string(o.n_venues - 1).size();
  for (std::size_t j = 0; j < o.n_venues; ++j) {
    VenueProfile v;
    std::string num = std::to_string(j);
    v.venue_id = "v" + std::string(width - num.size(), '0') + num;
    v.name = "Journal of " + capitalised(sc.vocabulary[j * t]) + " " +
             capitalised(sc.vocabulary[j * t + 1]);
    std::vector<std::string> scope;
    for (std::size_t i = 0; i < o.scope_len; ++i) scope.push_back(topic_word(j));
    v.aims_scope = join(scope);
    sc.venues.push_back(std::move(v));
  }

  const std::size_t total = o.n_venues * o.docs_per_venue;
  const std::size_t id_width = std::to_string(total - 1).size();
  std::size_t next_id = 0;
  for (std::size_t j = 0; j < o.n_venues; ++j) {
    for (std::size_t i = 0; i < o.docs_per_venue; ++i) {
      Document d;
      std::string num = std::to_string(next_id++);
      d.id = "d" + std::string(id_width - num.size(), '0') + num;
      std::vector<std::string> words;
      for (std::size_t k = jitter(o.title_len); k > 0; --k) words.push_back(draw(j));
      d.title = join(words);
      words.clear();
      for (std::size_t k = jitter(o.abstract_len); k > 0; --k) words.push_back(draw(j));
      d.abstract = join(words) + ".";
      for (std::size_t k = 0; k < o.keyword_count; ++k) d.keywords.push_back(draw(j));
      d.venue_id = sc.venues[j].venue_id;
      sc.documents.push_back(std::move(d));
    }
  }
  return sc;
}

}  // namespace venuerank
