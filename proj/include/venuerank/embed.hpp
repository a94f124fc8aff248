#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "venuerank/tensor.hpp"
#include "venuerank/textprep.hpp"

namespace venuerank {

enum class OovPolicy { zero, skip };

/// Pretrained word vectors, one row per token.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> tokens, nn::Tensor vectors);

  std::size_t dim() const noexcept { return vectors_.empty() ? 0 : vectors_.dim(1); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const nn::Tensor& vectors() const noexcept { return vectors_; }

  /// Row index of `token`, or -1.
  std::ptrdiff_t find(std::string_view token) const;
  std::span<const double> row(std::size_t i) const { return vectors_.row(i); }

 private:
  std::vector<std::string> tokens_;
  nn::Tensor vectors_;  // [count, dim]
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text ".vec" format: header "count dim", then "token v1 ... vdim" per line.
EmbeddingTable load_vectors(const std::filesystem::path& path);
EmbeddingTable read_vectors(std::istream& in);
/// Values are written with 17 significant digits so loading is exact.
void write_vectors(const EmbeddingTable& table, const std::filesystem::path& path);
void write_vectors(const EmbeddingTable& table, std::ostream& out);

/// [M, d] matrix whose row i is the vector of the token at position i.
/// Padding positions are zero; unknown tokens are zero under OovPolicy::zero
/// (OovPolicy::skip is treated the same here to keep the shape fixed).
nn::Tensor lookup_matrix(const TokenSequence& seq, const EmbeddingTable& table);

/// Mean of the token vectors. With OovPolicy::skip unknown tokens are ignored;
/// with OovPolicy::zero they contribute zero vectors to the mean.
/// Throws EmptyTextError("empty centroid") if no token resolves.
std::vector<double> doc_centroid(const std::vector<std::string>& tokens,
                                 const EmbeddingTable& table, OovPolicy policy = OovPolicy::skip);

/// Vectors for a synthetic vocabulary: each venue's topic words are scattered
/// around a random venue direction, general words are isotropic noise.
EmbeddingTable synth_vectors(const SynthCorpus& corpus, std::size_t dim, double noise,
                             std::uint64_t seed);

}  // namespace venuerank
