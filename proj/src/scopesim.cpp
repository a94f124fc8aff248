#include "venuerank/scopesim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "venuerank/checkpoint.hpp"
#include "venuerank/errors.hpp"

namespace venuerank {

using nn::Tensor;

namespace {

constexpr const char* kScopeMagic = "VENUERANK-SCOPE";

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || a.size() != b.size()) {
    throw ShapeError("cosine: vectors of length " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine: zero-norm vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void cosine_backward(std::span<const double> a, std::span<const double> b, double dout,
                     std::span<double> da, std::span<double> db) {
  check_pair(a, b);
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (!(aa > 0.0) || !(bb > 0.0)) throw NumericError("cosine: zero-norm vector");
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  const double c = dot(a, b) / (na * nb);
  const double inv = 1.0 / (na * nb);
  if (!da.empty()) {
    for (std::size_t i = 0; i < a.size(); ++i) da[i] += dout * (b[i] * inv - c * a[i] / aa);
  }
  if (!db.empty()) {
    for (std::size_t i = 0; i < b.size(); ++i) db[i] += dout * (a[i] * inv - c * b[i] / bb);
  }
}

void ScopeMatrix::validate() const {
  if (reprs.rank() != 2 || reprs.dim(0) != venue_ids.size()) {
    throw ShapeError("scope matrix: " + std::to_string(venue_ids.size()) + " venues but reprs " +
                     reprs.shape_string());
  }
  reprs.require_finite("scope matrix");
}

ScopeMatrix centroid_scope_matrix(const std::vector<VenueProfile>& venues,
                                  const EmbeddingTable& table, const Pipeline& pipeline) {
  if (venues.empty()) throw ConfigError("scope matrix: no venues");
  ScopeMatrix m;
  m.reprs = Tensor({venues.size(), table.dim()});
  for (std::size_t j = 0; j < venues.size(); ++j) {
    m.venue_ids.push_back(venues[j].venue_id);
    std::vector<double> c;
    try {
      c = doc_centroid(pipeline.tokens(venues[j].aims_scope), table, OovPolicy::skip);
    } catch (const EmptyTextError&) {
      throw EmptyTextError("venue '" + venues[j].venue_id + "': scope text has no known tokens");
    }
    std::copy(c.begin(), c.end(), m.reprs.row(j).begin());
  }
  return m;
}

void write_scope_matrix(const ScopeMatrix& m, std::ostream& out) {
  m.validate();
  out << kScopeMagic << '\n' << m.size() << ' ' << m.dim() << '\n';
  for (const auto& id : m.venue_ids) out << id << '\n';
  nn::write_f64_le(out, m.reprs.values());
  if (!out) throw std::runtime_error("scope matrix: write failed");
}

void write_scope_matrix(const ScopeMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_scope_matrix(m, out);
}

ScopeMatrix read_scope_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kScopeMagic) throw ParseError("not a scope matrix file", 1);
  std::size_t n = 0, d = 0;
  if (!std::getline(in, line)) throw ParseError("missing size line", 2);
  {
    auto parts = split_whitespace(line);
    try {
      if (parts.size() != 2) throw std::invalid_argument("arity");
      n = std::stoull(parts[0]);
      d = std::stoull(parts[1]);
    } catch (const std::exception&) {
      throw ParseError("size line must be '<N> <d>'", 2);
    }
  }
  if (n == 0 || d == 0) throw ParseError("scope matrix dimensions must be positive", 2);
  ScopeMatrix m;
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::getline(in, line)) throw ParseError("missing venue id", 3 + j);
    m.venue_ids.push_back(line);
  }
  m.reprs = Tensor({n, d});
  nn::read_f64_le(in, m.reprs.values());
  m.validate();
  return m;
}

ScopeMatrix read_scope_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open scope matrix '" + path.string() + "'");
  return read_scope_matrix(in);
}

Tensor scope_scores(std::span<const double> doc_repr, const Tensor& scope_reprs, ZeroNormPolicy policy,
                    std::size_t* degenerate) {
  if (scope_reprs.rank() != 2 || scope_reprs.dim(1) != doc_repr.size()) {
    throw ShapeError("scope_scores: doc repr of length " + std::to_string(doc_repr.size()) +
                     " against scope " + scope_reprs.shape_string());
  }
  if (!(dot(doc_repr, doc_repr) > 0.0)) throw NumericError("scope_scores: zero-norm document vector");
  const std::size_t n = scope_reprs.dim(0);
  Tensor out({n});
  for (std::size_t j = 0; j < n; ++j) {
    auto row = scope_reprs.row(j);
    if (!(dot(row, row) > 0.0)) {
      if (policy == ZeroNormPolicy::error) {
        throw NumericError("scope_scores: scope row " + std::to_string(j) + " has zero norm");
      }
      out[j] = -1.0;
      if (degenerate) ++*degenerate;
      continue;
    }
    out[j] = cosine(doc_repr, row);
  }
  return out;
}

Tensor scope_scores(std::span<const double> doc_repr, const ScopeMatrix& scope, ZeroNormPolicy policy,
                    std::size_t* degenerate) {
  return scope_scores(doc_repr, scope.reprs, policy, degenerate);
}

void scope_scores_backward(std::span<const double> doc_repr, const Tensor& scope_reprs,
                           const Tensor& dscores, std::span<double> ddoc, Tensor* dscope) {
  const std::size_t n = scope_reprs.dim(0);
  const std::size_t d = scope_reprs.dim(1);
  if (dscores.size() != n || ddoc.size() != d || doc_repr.size() != d) {
    throw ShapeError("scope_scores_backward: shape mismatch");
  }
  if (dscope && dscope->shape() != scope_reprs.shape()) {
    throw ShapeError("scope_scores_backward: dscope must be " + scope_reprs.shape_string());
  }
  for (std::size_t j = 0; j < n; ++j) {
    auto row = scope_reprs.row(j);
    if (!(dot(row, row) > 0.0)) continue;
    std::span<double> drow = dscope ? dscope->row(j) : std::span<double>{};
    cosine_backward(doc_repr, row, dscores[j], ddoc, drow);
  }
}

SimilarityFlow::SimilarityFlow(std::size_t n_venues, SimilarityFlowSpec spec, std::string prefix) {
  if (spec.widths.empty()) throw ConfigError("similarity flow needs at least one layer");
  std::vector<nn::DenseBlockSpec> blocks;
  for (auto w : spec.widths) blocks.push_back({w, true, spec.dropout});
  stack_ = nn::DenseStack(std::move(prefix), n_venues, std::move(blocks));
}

Tensor SimilarityFlow::forward(const nn::ParamStore& params, const Tensor& scores, nn::Mode mode, Rng* rng,
                               nn::DenseStack::Trace* trace) const {
  if (scores.rank() != 1 || scores.size() != stack_.in_width()) {
    throw ShapeError("similarity flow expects " + std::to_string(stack_.in_width()) + " scores, got " +
                     scores.shape_string());
  }
  return stack_.forward(params, scores, mode, rng, trace);
}

}  // namespace venuerank
