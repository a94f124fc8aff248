#pragma once

// Feature extractors built from the layer engine: single-kernel Conv1D,
// (bi)LSTM/(bi)GRU and parallel multi-kernel Conv1D.
//
// Encoders are mask-aware. Only the real (mask = 1) prefix of the sequence
// is read, so outputs do not depend on how many padding rows follow it.
// Convolutions see max(length, kernel) rows so that very short inputs still
// produce one window.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "venuerank/nn.hpp"

namespace venuerank {

enum class EncoderKind { conv1d_single, lstm, bilstm, gru, bigru, multikernel_conv };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& s);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::multikernel_conv;
  std::size_t units = 100;    // recurrent kinds
  std::size_t filters = 200;  // convolutional kinds
  std::size_t kernel_size = 3;                      // conv1d_single
  std::vector<std::size_t> kernel_sizes{2, 3, 4};  // multikernel_conv
  std::size_t embed_dim = 300;
  std::size_t max_len = 512;

  void validate() const;
  bool recurrent() const noexcept;
  bool bidirectional() const noexcept;
};

/// Output width as a pure function of the spec.
std::size_t feature_width(const EncoderSpec& spec);

/// Number of leading mask = 1 positions. Throws ShapeError if the mask is not
/// a run of 1s followed by 0s.
std::size_t mask_length(std::span<const std::uint8_t> mask);

class Encoder {
 public:
  explicit Encoder(EncoderSpec spec, std::string prefix = "encoder");

  void init_params(nn::ParamStore& params, Rng& rng) const;

  struct Trace {
    std::size_t total_rows = 0;  // M of the input matrix
    nn::Tensor input;            // rows actually consumed
    std::vector<nn::Tensor> windows;  // per conv branch: its input slice
    std::vector<nn::PoolResult> pools;
    std::vector<std::size_t> conv_rows;
    nn::RecurrentTrace rnn;
    nn::BidirectionalTrace birnn;
  };

  /// emb: [M, d]; mask: length M. Throws ShapeError on an all-padding input.
  nn::Tensor forward(const nn::ParamStore& params, const nn::Tensor& emb,
                     std::span<const std::uint8_t> mask, Trace* trace = nullptr) const;
  /// Accumulates parameter gradients and returns d emb, shape [M, d].
  nn::Tensor backward(nn::ParamStore& params, const Trace& trace, const nn::Tensor& dfeature) const;

  const EncoderSpec& spec() const noexcept { return spec_; }
  std::size_t width() const { return feature_width(spec_); }

 private:
  nn::RecurrentWeights weights(const nn::ParamStore& params, const std::string& dir) const;
  nn::RecurrentGrads grads(nn::ParamStore& params, const std::string& dir) const;

  EncoderSpec spec_;
  std::string prefix_;
};

/// Single-call convenience over Encoder with prefix "encoder".
nn::Tensor encode(const EncoderSpec& spec, const nn::ParamStore& params, const nn::Tensor& emb,
                  std::span<const std::uint8_t> mask);

/// Mean of the embedding rows over mask = 1 positions: [d].
nn::Tensor pooled_repr(const nn::Tensor& emb, std::span<const std::uint8_t> mask);
/// d emb for pooled_repr: each real row receives dpooled / length.
nn::Tensor pooled_repr_backward(std::span<const std::uint8_t> mask, std::size_t dim,
                                const nn::Tensor& dpooled);

}  // namespace venuerank
