#include "venuerank/embed.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "venuerank/errors.hpp"
#include "venuerank/rng.hpp"

namespace venuerank {

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, nn::Tensor vectors)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)) {
  if (vectors_.rank() != 2 || vectors_.dim(0) != tokens_.size()) {
    throw ShapeError("embedding table: " + std::to_string(tokens_.size()) + " tokens but vectors " +
                     vectors_.shape_string());
  }
  vectors_.require_finite("embedding table");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw ConfigError("embedding table: token '" + tokens_[i] + "' appears twice");
    }
  }
}

std::ptrdiff_t EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

EmbeddingTable read_vectors(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty vector file", 1);
  auto header = split_whitespace(line);
  std::size_t count = 0, dim = 0;
  try {
    if (header.size() != 2) throw std::invalid_argument("arity");
    count = std::stoull(header[0]);
    dim = std::stoull(header[1]);
  } catch (const std::exception&) {
    throw ParseError("header must be '<count> <dim>'", 1);
  }
  if (count == 0 || dim == 0) throw ParseError("header count and dim must be positive", 1);

  std::vector<std::string> tokens;
  tokens.reserve(count);
  std::vector<double> values;
  values.reserve(count * dim);
  std::size_t lineno = 1;
  while (tokens.size() < count && std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    // The token is everything up to the first space; vector values follow.
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError("expected " + std::to_string(dim) + " values, got 0", lineno);
    auto fields = split_whitespace(std::string_view(line).substr(sp + 1));
    if (fields.size() != dim) {
      throw ParseError("expected " + std::to_string(dim) + " values, got " + std::to_string(fields.size()),
                       lineno);
    }
    tokens.push_back(line.substr(0, sp));
    for (const auto& f : fields) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(f, &used);
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw ParseError("bad number '" + f + "'", lineno);
      }
      if (!std::isfinite(v)) throw ParseError("non-finite value '" + f + "'", lineno);
      values.push_back(v);
    }
  }
  if (tokens.size() != count) {
    throw ParseError("header promises " + std::to_string(count) + " rows, found " +
                     std::to_string(tokens.size()));
  }
  return EmbeddingTable(std::move(tokens), nn::Tensor({count, dim}, std::move(values)));
}

EmbeddingTable load_vectors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vector file '" + path.string() + "'");
  return read_vectors(in);
}

void write_vectors(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    for (double v : table.row(i)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

void write_vectors(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_vectors(table, out);
}

nn::Tensor lookup_matrix(const TokenSequence& seq, const EmbeddingTable& table) {
  const std::size_t d = table.dim();
  if (d == 0) throw ConfigError("lookup_matrix: empty embedding table");
  nn::Tensor out({seq.max_len, d});
  for (std::size_t i = 0; i < seq.tokens.size() && i < seq.max_len; ++i) {
    if (!seq.mask[i]) continue;
    const auto r = table.find(seq.tokens[i]);
    if (r < 0) continue;
    auto src = table.row(static_cast<std::size_t>(r));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> doc_centroid(const std::vector<std::string>& tokens,
                                 const EmbeddingTable& table, OovPolicy policy) {
  std::vector<double> sum(table.dim(), 0.0);
  std::size_t resolved = 0, counted = 0;
  for (const auto& t : tokens) {
    const auto r = table.find(t);
    if (r < 0) {
      if (policy == OovPolicy::zero) ++counted;
      continue;
    }
    auto row = table.row(static_cast<std::size_t>(r));
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += row[c];
    ++resolved;
    ++counted;
  }
  if (resolved == 0) throw EmptyTextError("empty centroid");
  for (auto& v : sum) v /= static_cast<double>(counted);
  return sum;
}

EmbeddingTable synth_vectors(const SynthCorpus& corpus, std::size_t dim, double noise,
                             std::uint64_t seed) {
  if (dim == 0) throw ConfigError("synth_vectors: dim must be positive");
  Rng rng(seed);
  auto gaussian = [&] {
    // Box-Muller; kept local so the draw sequence is fixed.
    const double u1 = std::max(rng.uniform(), 1e-300);
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };
  const std::size_t n_venues = corpus.venues.size();
  const std::size_t t = corpus.topic_words_per_venue;
  std::vector<std::vector<double>> centres(n_venues, std::vector<double>(dim));
  for (auto& c : centres) {
    for (auto& v : c) v = gaussian();
  }
  const std::size_t n = corpus.vocabulary.size();
  nn::Tensor vecs({n, dim});
  for (std::size_t i = 0; i < n; ++i) {
    const bool topic = i < n_venues * t;
    for (std::size_t c = 0; c < dim; ++c) {
      const double base = topic ? centres[i / t][c] : 0.0;
      vecs.at(i, c) = base + noise * gaussian();
    }
  }
  return EmbeddingTable(corpus.vocabulary, std::move(vecs));
}

}  // namespace venuerank
