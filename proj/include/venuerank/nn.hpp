#pragma once

// Forward and backward passes for every layer the recommender uses.
//
// Backward functions accumulate (+=) into parameter gradients and overwrite
// input gradients. All functions reject inconsistent shapes with ShapeError;
// nothing broadcasts implicitly.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "venuerank/params.hpp"
#include "venuerank/rng.hpp"
#include "venuerank/tensor.hpp"

namespace venuerank::nn {

enum class Mode { train, infer };

// --- dense -----------------------------------------------------------------

/// y = xW + b for x of shape [in] or [n, in].
Tensor dense_forward(const Tensor& x, const Tensor& W, const Tensor& b);
/// Accumulates into dW, db. Writes dx when non-null.
void dense_backward(const Tensor& x, const Tensor& W, const Tensor& dy, Tensor* dx, Tensor& dW,
                    Tensor& db);

// --- activations -------------------------------------------------------------

Tensor relu(const Tensor& x);
/// Gradient of relu given its *output* y.
Tensor relu_backward(const Tensor& y, const Tensor& dy);

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); infer mode is the identity.
/// When `scale_out` is non-null it receives the per-element multiplier.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* scale_out = nullptr);
Tensor dropout(const Tensor& x, double rate, Mode mode, std::uint64_t seed);

// --- convolution and pooling -------------------------------------------------

/// Valid 1-D convolution: x [M, d], kernels [k, d, F], bias [F] -> [M-k+1, F].
Tensor conv1d_forward(const Tensor& x, const Tensor& kernels, const Tensor& bias);
void conv1d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dy, Tensor* dx,
                     Tensor& dkernels, Tensor& dbias);

struct PoolResult {
  Tensor out;                       // [F]
  std::vector<std::size_t> argmax;  // first maximising row per column
};

PoolResult global_max_pool(const Tensor& x);
/// Routes dy[f] to row argmax[f]; returns a [rows, F] gradient.
Tensor global_max_pool_backward(std::span<const std::size_t> argmax, std::size_t rows,
                                const Tensor& dy);

// --- recurrent cells ---------------------------------------------------------

enum class CellKind { lstm, gru };
enum class ReturnMode { sequence, last };

/// Weights of one recurrent direction. Gate blocks are laid out along the
/// last axis: LSTM (input, forget, candidate, output) -> 4u,
/// GRU (update, reset, candidate) -> 3u.
struct RecurrentWeights {
  const Tensor* input;      // [d, G*u]
  const Tensor* recurrent;  // [u, G*u]
  const Tensor* bias;       // [G*u]
};

struct RecurrentGrads {
  Tensor* input;
  Tensor* recurrent;
  Tensor* bias;
};

/// Per-step activations kept for the backward pass.
struct RecurrentTrace {
  CellKind kind = CellKind::lstm;
  std::size_t units = 0;
  std::size_t steps = 0;
  std::vector<double> gates;   // [T, G*u] post-activation gate values
  std::vector<double> cells;   // LSTM: [T, u] cell state; GRU unused
  std::vector<double> states;  // [T, u] hidden state
};

std::size_t gate_count(CellKind kind);

/// Standard LSTM with zero initial state. Output [T, u] or [u].
Tensor lstm_forward(const Tensor& x, const RecurrentWeights& w, std::size_t units,
                    ReturnMode mode, RecurrentTrace* trace = nullptr);

/// GRU whose candidate uses the reset-gated previous state:
///   z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br),
///   n = tanh(x Wn + (r*h) Un + bn), h' = z*h + (1-z)*n.
Tensor gru_forward(const Tensor& x, const RecurrentWeights& w, std::size_t units,
                   ReturnMode mode, RecurrentTrace* trace = nullptr);

Tensor recurrent_forward(CellKind kind, const Tensor& x, const RecurrentWeights& w,
                         std::size_t units, ReturnMode mode, RecurrentTrace* trace = nullptr);

/// `dout` has the forward output's shape. Returns dx [T, d].
Tensor recurrent_backward(const Tensor& x, const RecurrentWeights& w, const RecurrentTrace& trace,
                          ReturnMode mode, const Tensor& dout, const RecurrentGrads& g);

struct BidirectionalTrace {
  RecurrentTrace forward;
  RecurrentTrace backward;
  Tensor reversed_input;
};

/// concat(fwd(x), reverse_time(bwd(reverse_time(x)))) on the feature axis.
/// Output [T, 2u] or [2u]; in last mode the backward half is the state after
/// consuming the whole reversed sequence.
Tensor bidirectional_forward(CellKind kind, const Tensor& x, const RecurrentWeights& fwd,
                             const RecurrentWeights& bwd, std::size_t units, ReturnMode mode,
                             BidirectionalTrace* trace = nullptr);

Tensor bidirectional_backward(const Tensor& x, const RecurrentWeights& fwd,
                              const RecurrentWeights& bwd, const BidirectionalTrace& trace,
                              ReturnMode mode, const Tensor& dout, const RecurrentGrads& gf,
                              const RecurrentGrads& gb);

/// Reverse the row order of a rank-2 tensor.
Tensor reverse_rows(const Tensor& x);

// --- loss ---------------------------------------------------------------------

struct SoftmaxXent {
  double loss = 0.0;
  Tensor probs;
};

/// Max-shifted softmax followed by -log p[label].
SoftmaxXent softmax_xent(const Tensor& logits, std::size_t label);
Tensor softmax(const Tensor& logits);
/// d loss / d logits = probs - onehot(label).
Tensor softmax_xent_backward(const Tensor& probs, std::size_t label);

// --- dense stacks ------------------------------------------------------------

struct DenseBlockSpec {
  std::size_t width = 0;
  bool relu = true;
  double dropout = 0.0;
};

/// Sequence of dense(+relu)(+dropout) blocks with parameters named
/// "<prefix>.<i>.W" and "<prefix>.<i>.b".
class DenseStack {
 public:
  DenseStack() = default;
  DenseStack(std::string prefix, std::size_t in_width, std::vector<DenseBlockSpec> blocks);

  struct Trace {
    std::vector<Tensor> inputs;     // input of each block
    std::vector<Tensor> activated;  // post-relu, pre-dropout
    std::vector<Tensor> scales;     // dropout multipliers (empty in infer mode)
  };

  void init_params(ParamStore& params, Rng& rng) const;
  Tensor forward(const ParamStore& params, const Tensor& x, Mode mode, Rng* rng,
                 Trace* trace) const;
  /// Accumulates parameter grads; returns dx.
  Tensor backward(ParamStore& params, const Trace& trace, const Tensor& dy) const;

  std::size_t in_width() const noexcept { return in_width_; }
  std::size_t out_width() const noexcept;
  const std::vector<DenseBlockSpec>& blocks() const noexcept { return blocks_; }

 private:
  std::string prefix_;
  std::size_t in_width_ = 0;
  std::vector<DenseBlockSpec> blocks_;
};

}  // namespace venuerank::nn
