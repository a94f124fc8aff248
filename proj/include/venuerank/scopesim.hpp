#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "venuerank/corpus.hpp"
#include "venuerank/embed.hpp"
#include "venuerank/nn.hpp"
#include "venuerank/textprep.hpp"

namespace venuerank {

/// a.b / (|a| |b|), clamped to [-1, 1]. Throws ShapeError on a length
/// mismatch or empty input and NumericError if either norm is zero.
double cosine(std::span<const double> a, std::span<const double> b);

/// Gradients of cosine(a, b) scaled by `dout`, accumulated into da and db
/// (either may be null). The clamp is treated as the identity.
void cosine_backward(std::span<const double> a, std::span<const double> b, double dout,
                     std::span<double> da, std::span<double> db);

enum class ZeroNormPolicy { error, minus_one };

/// Venue scope representations in canonical venue order.
struct ScopeMatrix {
  std::vector<std::string> venue_ids;
  nn::Tensor reprs;  // [N, d]

  std::size_t size() const noexcept { return venue_ids.size(); }
  std::size_t dim() const { return reprs.empty() ? 0 : reprs.dim(1); }
  void validate() const;
};

/// Frozen scope representations: the centroid of each venue's cleaned
/// scope tokens under `table` (OOV tokens skipped).
ScopeMatrix centroid_scope_matrix(const std::vector<VenueProfile>& venues,
                                  const EmbeddingTable& table, const Pipeline& pipeline);

/// Binary export: "VENUERANK-SCOPE\n", "N d\n", N venue id lines, then N*d
/// little-endian doubles.
void write_scope_matrix(const ScopeMatrix& m, std::ostream& out);
void write_scope_matrix(const ScopeMatrix& m, const std::filesystem::path& path);
ScopeMatrix read_scope_matrix(std::istream& in);
ScopeMatrix read_scope_matrix(const std::filesystem::path& path);

/// scores[j] = cosine(doc_repr, scope.reprs[j]). A zero-norm scope row is an
/// error unless `policy` is minus_one, in which case it scores -1 and
/// `degenerate` (when given) is incremented.
nn::Tensor scope_scores(std::span<const double> doc_repr, const nn::Tensor& scope_reprs,
                        ZeroNormPolicy policy = ZeroNormPolicy::error,
                        std::size_t* degenerate = nullptr);
nn::Tensor scope_scores(std::span<const double> doc_repr, const ScopeMatrix& scope,
                        ZeroNormPolicy policy = ZeroNormPolicy::error,
                        std::size_t* degenerate = nullptr);

/// Backward of scope_scores. Accumulates into ddoc [d] and, when non-null,
/// dscope [N, d]. Rows that scored through the minus_one fallback get no
/// gradient.
void scope_scores_backward(std::span<const double> doc_repr, const nn::Tensor& scope_reprs,
                           const nn::Tensor& dscores, std::span<double> ddoc, nn::Tensor* dscope);

/// Dense stack over the score vector. Defaults to 1500/1000/500 with relu
/// and dropout 0.4 after each layer.
struct SimilarityFlowSpec {
  std::vector<std::size_t> widths{1500, 1000, 500};
  double dropout = 0.4;
};

class SimilarityFlow {
 public:
  SimilarityFlow() = default;
  SimilarityFlow(std::size_t n_venues, SimilarityFlowSpec spec, std::string prefix = "simflow");

  void init_params(nn::ParamStore& params, Rng& rng) const { stack_.init_params(params, rng); }
  nn::Tensor forward(const nn::ParamStore& params, const nn::Tensor& scores, nn::Mode mode, Rng* rng,
                     nn::DenseStack::Trace* trace = nullptr) const;
  nn::Tensor backward(nn::ParamStore& params, const nn::DenseStack::Trace& trace,
                      const nn::Tensor& dy) const {
    return stack_.backward(params, trace, dy);
  }
  std::size_t out_width() const noexcept { return stack_.out_width(); }

 private:
  nn::DenseStack stack_;
};

}  // namespace venuerank
