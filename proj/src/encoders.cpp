#include "venuerank/encoders.hpp"

#include <algorithm>

#include "venuerank/errors.hpp"

namespace venuerank {

using nn::Tensor;

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::conv1d_single: return "conv1d_single";
    case EncoderKind::lstm: return "lstm";
    case EncoderKind::bilstm: return "bilstm";
    case EncoderKind::gru: return "gru";
    case EncoderKind::bigru: return "bigru";
    case EncoderKind::multikernel_conv: return "multikernel_conv";
  }
  return "?";
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  for (auto k : {EncoderKind::conv1d_single, EncoderKind::lstm, EncoderKind::bilstm,
                 EncoderKind::gru, EncoderKind::bigru, EncoderKind::multikernel_conv}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown encoder kind '" + s + "'");
}

bool EncoderSpec::recurrent() const noexcept {
  return kind == EncoderKind::lstm || kind == EncoderKind::bilstm || kind == EncoderKind::gru ||
         kind == EncoderKind::bigru;
}

bool EncoderSpec::bidirectional() const noexcept {
  return kind == EncoderKind::bilstm || kind == EncoderKind::bigru;
}

void EncoderSpec::validate() const {
  if (embed_dim == 0) throw ConfigError("encoder: embed_dim must be positive");
  if (max_len == 0) throw ConfigError("encoder: max_len must be positive");
  if (recurrent() && units == 0) throw ConfigError("encoder: recurrent units must be >= 1");
  if (kind == EncoderKind::conv1d_single) {
    if (filters == 0 || kernel_size == 0) throw ConfigError("encoder: conv needs filters and kernel >= 1");
    if (kernel_size > max_len) throw ConfigError("encoder: kernel size exceeds max_len");
  }
  if (kind == EncoderKind::multikernel_conv) {
    if (kernel_sizes.empty()) throw ConfigError("encoder: multikernel needs at least one kernel size");
    if (filters == 0) throw ConfigError("encoder: filters must be >= 1");
    for (auto k : kernel_sizes) {
      if (k == 0 || k > max_len) {
        throw ConfigError("encoder: kernel size " + std::to_string(k) + " outside [1, max_len]");
      }
    }
  }
}

std::size_t feature_width(const EncoderSpec& spec) {
  switch (spec.kind) {
    case EncoderKind::conv1d_single: return spec.filters;
    case EncoderKind::lstm:
    case EncoderKind::gru: return spec.units;
    case EncoderKind::bilstm:
    case EncoderKind::bigru: return 2 * spec.units;
    case EncoderKind::multikernel_conv: return spec.filters * spec.kernel_sizes.size();
  }
  return 0;
}

std::size_t mask_length(std::span<const std::uint8_t> mask) {
  std::size_t n = 0;
  while (n < mask.size() && mask[n]) ++n;
  for (std::size_t i = n; i < mask.size(); ++i) {
    if (mask[i]) throw ShapeError("mask must be a prefix of 1s followed by 0s");
  }
  return n;
}

namespace {

nn::CellKind cell_of(EncoderKind k) {
  return (k == EncoderKind::lstm || k == EncoderKind::bilstm) ? nn::CellKind::lstm : nn::CellKind::gru;
}

Tensor head_rows(const Tensor& x, std::size_t rows) {
  const std::size_t d = x.dim(1);
  return Tensor({rows, d}, std::vector<double>(x.data(), x.data() + rows * d));
}

void check_input(const EncoderSpec& spec, const Tensor& emb, std::span<const std::uint8_t> mask) {
  if (emb.rank() != 2 || emb.dim(1) != spec.embed_dim) {
    throw ShapeError("encoder: embedding matrix must be [M, " + std::to_string(spec.embed_dim) +
                     "], got " + emb.shape_string());
  }
  if (mask.size() != emb.dim(0)) {
    throw ShapeError("encoder: mask length " + std::to_string(mask.size()) + " != M " +
                     std::to_string(emb.dim(0)));
  }
}

}  // namespace

Encoder::Encoder(EncoderSpec spec, std::string prefix) : spec_(std::move(spec)), prefix_(std::move(prefix)) {
  spec_.validate();
}

void Encoder::init_params(nn::ParamStore& params, Rng& rng) const {
  const std::size_t d = spec_.embed_dim;
  auto add_conv = [&](const std::string& base, std::size_t k) {
    const std::size_t F = spec_.filters;
    params.add(base + ".kernel", nn::glorot_uniform({k, d, F}, k * d, k * F, rng));
    params.add(base + ".bias", Tensor({F}));
  };
  auto add_rnn = [&](const std::string& dir) {
    const std::size_t u = spec_.units;
    const std::size_t G = nn::gate_count(cell_of(spec_.kind));
    params.add(prefix_ + "." + dir + ".input", nn::glorot_uniform({d, G * u}, d, G * u, rng));
    params.add(prefix_ + "." + dir + ".recurrent", nn::glorot_uniform({u, G * u}, u, G * u, rng));
    Tensor bias({G * u});
    if (cell_of(spec_.kind) == nn::CellKind::lstm) {
      for (std::size_t j = u; j < 2 * u; ++j) bias[j] = 1.0;  // forget gate
    }
    params.add(prefix_ + "." + dir + ".bias", std::move(bias));
  };
  switch (spec_.kind) {
    case EncoderKind::conv1d_single:
      add_conv(prefix_ + ".conv", spec_.kernel_size);
      break;
    case EncoderKind::multikernel_conv:
      for (std::size_t i = 0; i < spec_.kernel_sizes.size(); ++i) {
        add_conv(prefix_ + ".conv." + std::to_string(i), spec_.kernel_sizes[i]);
      }
      break;
    case EncoderKind::lstm:
    case EncoderKind::gru:
      add_rnn("fwd");
      break;
    case EncoderKind::bilstm:
    case EncoderKind::bigru:
      add_rnn("fwd");
      add_rnn("bwd");
      break;
  }
}

nn::RecurrentWeights Encoder::weights(const nn::ParamStore& params, const std::string& dir) const {
  const std::string b = prefix_ + "." + dir;
  return {&params.value(b + ".input"), &params.value(b + ".recurrent"), &params.value(b + ".bias")};
}

nn::RecurrentGrads Encoder::grads(nn::ParamStore& params, const std::string& dir) const {
  const std::string b = prefix_ + "." + dir;
  return {&params.grad(b + ".input"), &params.grad(b + ".recurrent"), &params.grad(b + ".bias")};
}

Tensor Encoder::forward(const nn::ParamStore& params, const Tensor& emb,
                        std::span<const std::uint8_t> mask, Trace* trace) const {
  check_input(spec_, emb, mask);
  const std::size_t L = mask_length(mask);
  if (L == 0) throw ShapeError("encoder: input is all padding");
  const std::size_t M = emb.dim(0);
  Trace local;
  Trace& tr = trace ? *trace : local;
  tr = Trace{};
  tr.total_rows = M;

  if (spec_.recurrent()) {
    tr.input = head_rows(emb, L);
    if (spec_.bidirectional()) {
      return nn::bidirectional_forward(cell_of(spec_.kind), tr.input, weights(params, "fwd"),
                                       weights(params, "bwd"), spec_.units, nn::ReturnMode::last,
                                       &tr.birnn);
    }
    return nn::recurrent_forward(cell_of(spec_.kind), tr.input, weights(params, "fwd"),
                                 spec_.units, nn::ReturnMode::last, &tr.rnn);
  }

  std::vector<std::pair<std::string, std::size_t>> branches;
  if (spec_.kind == EncoderKind::conv1d_single) {
    branches.emplace_back(prefix_ + ".conv", spec_.kernel_size);
  } else {
    for (std::size_t i = 0; i < spec_.kernel_sizes.size(); ++i) {
      branches.emplace_back(prefix_ + ".conv." + std::to_string(i), spec_.kernel_sizes[i]);
    }
  }
  std::vector<Tensor> pooled;
  for (const auto& [base, k] : branches) {
    if (M < k) {
      throw ShapeError("encoder: sequence length " + std::to_string(M) + " shorter than kernel " +
                       std::to_string(k));
    }
    const std::size_t rows = std::max(L, k);
    Tensor window = head_rows(emb, rows);
    Tensor conv = nn::conv1d_forward(window, params.value(base + ".kernel"), params.value(base + ".bias"));
    auto pool = nn::global_max_pool(conv);
    pooled.push_back(pool.out);
    tr.conv_rows.push_back(conv.dim(0));
    tr.windows.push_back(std::move(window));
    tr.pools.push_back(std::move(pool));
  }
  return nn::concat(pooled);
}

Tensor Encoder::backward(nn::ParamStore& params, const Trace& tr, const Tensor& dfeature) const {
  const std::size_t d = spec_.embed_dim;
  Tensor demb({tr.total_rows, d});
  auto scatter = [&](const Tensor& dx) {
    for (std::size_t i = 0; i < dx.size(); ++i) demb[i] += dx[i];
  };
  if (spec_.recurrent()) {
    Tensor dx;
    if (spec_.bidirectional()) {
      dx = nn::bidirectional_backward(tr.input, weights(params, "fwd"), weights(params, "bwd"), tr.birnn,
                                      nn::ReturnMode::last, dfeature, grads(params, "fwd"),
                                      grads(params, "bwd"));
    } else {
      dx = nn::recurrent_backward(tr.input, weights(params, "fwd"), tr.rnn, nn::ReturnMode::last,
                                  dfeature, grads(params, "fwd"));
    }
    scatter(dx);
    return demb;
  }
  const std::size_t F = spec_.filters;
  const std::size_t nb = tr.pools.size();
  std::vector<std::size_t> widths(nb, F);
  auto parts = nn::split(dfeature, widths);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::string base = spec_.kind == EncoderKind::conv1d_single
                                 ? prefix_ + ".conv"
                                 : prefix_ + ".conv." + std::to_string(b);
    Tensor dconv = nn::global_max_pool_backward(tr.pools[b].argmax, tr.conv_rows[b], parts[b]);
    auto& K = params.get(base + ".kernel");
    auto& bias = params.get(base + ".bias");
    Tensor dx;
    nn::conv1d_backward(tr.windows[b], K.value, dconv, &dx, K.grad, bias.grad);
    scatter(dx);
  }
  return demb;
}

Tensor encode(const EncoderSpec& spec, const nn::ParamStore& params, const Tensor& emb,
              std::span<const std::uint8_t> mask) {
  return Encoder(spec).forward(params, emb, mask);
}

Tensor pooled_repr(const Tensor& emb, std::span<const std::uint8_t> mask) {
  if (emb.rank() != 2 || mask.size() != emb.dim(0)) {
    throw ShapeError("pooled_repr: mask length does not match " + emb.shape_string());
  }
  const std::size_t L = mask_length(mask);
  if (L == 0) throw ShapeError("pooled_repr: input is all padding");
  const std::size_t d = emb.dim(1);
  Tensor out({d});
  for (std::size_t t = 0; t < L; ++t) {
    auto r = emb.row(t);
    for (std::size_t c = 0; c < d; ++c) out[c] += r[c];
  }
  for (auto& v : out.values()) v /= static_cast<double>(L);
  return out;
}

Tensor pooled_repr_backward(std::span<const std::uint8_t> mask, std::size_t dim, const Tensor& dpooled) {
  const std::size_t L = mask_length(mask);
  if (L == 0) throw ShapeError("pooled_repr: input is all padding");
  Tensor demb({mask.size(), dim});
  const double inv = 1.0 / static_cast<double>(L);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < dim; ++c) demb.at(t, c) = dpooled[c] * inv;
  }
  return demb;
}

}  // namespace venuerank
