#include "venuerank/nn.hpp"

#include <algorithm>
#include <cmath>

#include "venuerank/errors.hpp"

namespace venuerank::nn {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// --- dense -------------------------------------------------------------------

Tensor dense_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
  require(W.rank() == 2, "dense: W must be rank 2, got " + W.shape_string());
  require(b.rank() == 1 && b.dim(0) == W.dim(1),
          "dense: bias " + b.shape_string() + " does not match W " + W.shape_string());
  require(x.rank() == 1 || x.rank() == 2, "dense: x must be rank 1 or 2");
  const std::size_t in = W.dim(0), out = W.dim(1);
  const std::size_t n = x.rank() == 1 ? 1 : x.dim(0);
  require(x.shape().back() == in,
          "dense: x " + x.shape_string() + " incompatible with W " + W.shape_string());

  Tensor y(x.rank() == 1 ? Shape{out} : Shape{n, out});
  const double* xw = x.data();
  const double* wp = W.data();
  double* yp = y.data();
  for (std::size_t r = 0; r < n; ++r) {
    double* yr = yp + r * out;
    std::copy(b.data(), b.data() + out, yr);
    const double* xr = xw + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const double* wr = wp + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

void dense_backward(const Tensor& x, const Tensor& W, const Tensor& dy, Tensor* dx, Tensor& dW,
                    Tensor& db) {
  const std::size_t in = W.dim(0), out = W.dim(1);
  const std::size_t n = x.rank() == 1 ? 1 : x.dim(0);
  require(dy.size() == n * out, "dense backward: dy " + dy.shape_string() + " mismatched");
  require(dW.shape() == W.shape() && db.size() == out, "dense backward: grad shapes mismatched");
  const double* wp = W.data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* dyr = dy.data() + r * out;
    const double* xr = x.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      double* dwr = dW.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) dwr[o] += xv * dyr[o];
    }
  }
  if (dx) {
    *dx = Tensor(x.shape());
    for (std::size_t r = 0; r < n; ++r) {
      const double* dyr = dy.data() + r * out;
      double* dxr = dx->data() + r * in;
      for (std::size_t i = 0; i < in; ++i) {
        const double* wr = wp + i * out;
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += wr[o] * dyr[o];
        dxr[i] = acc;
      }
    }
  }
}

// --- activations -------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  require(y.shape() == dy.shape(), "relu backward: shape mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* scale_out) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::infer || rate == 0.0) {
    if (scale_out) *scale_out = Tensor();
    return x;
  }
  const double keep = 1.0 / (1.0 - rate);
  Tensor scale(x.shape());
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double s = rng.uniform() < rate ? 0.0 : keep;
    scale[i] = s;
    y[i] *= s;
  }
  if (scale_out) *scale_out = std::move(scale);
  return y;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, std::uint64_t seed) {
  Rng rng(seed);
  return dropout(x, rate, mode, rng);
}

// --- convolution -------------------------------------------------------------

Tensor conv1d_forward(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  require(x.rank() == 2, "conv1d: x must be [M, d], got " + x.shape_string());
  require(kernels.rank() == 3, "conv1d: kernels must be [k, d, F], got " + kernels.shape_string());
  const std::size_t M = x.dim(0), d = x.dim(1);
  const std::size_t k = kernels.dim(0), F = kernels.dim(2);
  require(kernels.dim(1) == d, "conv1d: kernel depth " + std::to_string(kernels.dim(1)) +
                                   " != input width " + std::to_string(d));
  require(bias.rank() == 1 && bias.dim(0) == F, "conv1d: bias must be [F]");
  if (M < k) {
    throw ShapeError("conv1d: sequence length " + std::to_string(M) + " shorter than kernel " +
                     std::to_string(k));
  }
  const std::size_t T = M - k + 1;
  Tensor y({T, F});
  for (std::size_t t = 0; t < T; ++t) {
    double* yr = y.data() + t * F;
    std::copy(bias.data(), bias.data() + F, yr);
    for (std::size_t i = 0; i < k; ++i) {
      const double* xr = x.data() + (t + i) * d;
      const double* kr = kernels.data() + i * d * F;
      for (std::size_t c = 0; c < d; ++c) {
        const double xv = xr[c];
        if (xv == 0.0) continue;
        const double* kc = kr + c * F;
        for (std::size_t f = 0; f < F; ++f) yr[f] += xv * kc[f];
      }
    }
  }
  return y;
}

void conv1d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dy, Tensor* dx,
                     Tensor& dkernels, Tensor& dbias) {
  const std::size_t d = x.dim(1);
  const std::size_t k = kernels.dim(0), F = kernels.dim(2);
  const std::size_t T = x.dim(0) - k + 1;
  require(dy.rank() == 2 && dy.dim(0) == T && dy.dim(1) == F, "conv1d backward: dy mismatched");
  if (dx) *dx = Tensor(x.shape());
  for (std::size_t t = 0; t < T; ++t) {
    const double* dyr = dy.data() + t * F;
    for (std::size_t f = 0; f < F; ++f) dbias[f] += dyr[f];
    for (std::size_t i = 0; i < k; ++i) {
      const double* xr = x.data() + (t + i) * d;
      const double* kr = kernels.data() + i * d * F;
      double* dkr = dkernels.data() + i * d * F;
      double* dxr = dx ? dx->data() + (t + i) * d : nullptr;
      for (std::size_t c = 0; c < d; ++c) {
        const double xv = xr[c];
        const double* kc = kr + c * F;
        double* dkc = dkr + c * F;
        double acc = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
          dkc[f] += xv * dyr[f];
          acc += kc[f] * dyr[f];
        }
        if (dxr) dxr[c] += acc;
      }
    }
  }
}

PoolResult global_max_pool(const Tensor& x) {
  require(x.rank() == 2, "global_max_pool: x must be [T, F], got " + x.shape_string());
  const std::size_t T = x.dim(0), F = x.dim(1);
  PoolResult r{Tensor({F}), std::vector<std::size_t>(F, 0)};
  for (std::size_t f = 0; f < F; ++f) r.out[f] = x.at(0, f);
  for (std::size_t t = 1; t < T; ++t) {
    const double* xr = x.data() + t * F;
    for (std::size_t f = 0; f < F; ++f) {
      if (xr[f] > r.out[f]) {
        r.out[f] = xr[f];
        r.argmax[f] = t;
      }
    }
  }
  return r;
}

Tensor global_max_pool_backward(std::span<const std::size_t> argmax, std::size_t rows,
                                const Tensor& dy) {
  require(dy.rank() == 1 && dy.size() == argmax.size(), "global_max_pool backward: mismatched");
  const std::size_t F = argmax.size();
  Tensor dx({rows, F});
  for (std::size_t f = 0; f < F; ++f) dx.at(argmax[f], f) = dy[f];
  return dx;
}

// --- recurrent ---------------------------------------------------------------

std::size_t gate_count(CellKind kind) { return kind == CellKind::lstm ? 4 : 3; }

namespace {

void check_recurrent(CellKind kind, const Tensor& x, const RecurrentWeights& w, std::size_t u) {
  const std::size_t G = gate_count(kind);
  const char* name = kind == CellKind::lstm ? "lstm" : "gru";
  require(u >= 1, std::string(name) + ": units must be >= 1");
  require(x.rank() == 2, std::string(name) + ": x must be [T, d], got " + x.shape_string());
  const std::size_t d = x.dim(1);
  require(w.input && w.input->shape() == Shape({d, G * u}),
          std::string(name) + ": input weights must be " + shape_string({d, G * u}));
  require(w.recurrent && w.recurrent->shape() == Shape({u, G * u}),
          std::string(name) + ": recurrent weights must be " + shape_string({u, G * u}));
  require(w.bias && w.bias->shape() == Shape({G * u}),
          std::string(name) + ": bias must be " + shape_string({G * u}));
}

// z[0:G*u] = x_t Wx + b
void input_projection(const double* xt, std::size_t d, const Tensor& Wx, const Tensor& b,
                      double* z, std::size_t width) {
  std::copy(b.data(), b.data() + width, z);
  for (std::size_t c = 0; c < d; ++c) {
    const double xv = xt[c];
    if (xv == 0.0) continue;
    const double* wr = Wx.data() + c * width;
    for (std::size_t j = 0; j < width; ++j) z[j] += xv * wr[j];
  }
}

// z[col0 : col0+ncols] += h U[:, col0 : col0+ncols]
void add_recurrent(const double* h, std::size_t u, const Tensor& U, std::size_t col0,
                   std::size_t ncols, double* z) {
  const std::size_t width = U.dim(1);
  for (std::size_t r = 0; r < u; ++r) {
    const double hv = h[r];
    if (hv == 0.0) continue;
    const double* ur = U.data() + r * width + col0;
    for (std::size_t j = 0; j < ncols; ++j) z[j] += hv * ur[j];
  }
}

Tensor collect_output(const std::vector<double>& states, std::size_t T, std::size_t u,
                      ReturnMode mode) {
  if (mode == ReturnMode::sequence) return Tensor({T, u}, states);
  return Tensor({u}, std::vector<double>(states.end() - static_cast<std::ptrdiff_t>(u),
                                         states.end()));
}

}  // namespace

Tensor lstm_forward(const Tensor& x, const RecurrentWeights& w, std::size_t u, ReturnMode mode,
                    RecurrentTrace* trace) {
  check_recurrent(CellKind::lstm, x, w, u);
  const std::size_t T = x.dim(0), d = x.dim(1), W4 = 4 * u;
  std::vector<double> gates(T * W4), cells(T * u), states(T * u);
  std::vector<double> zero(u, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double* z = gates.data() + t * W4;
    input_projection(x.data() + t * d, d, *w.input, *w.bias, z, W4);
    const double* hprev = t ? states.data() + (t - 1) * u : zero.data();
    const double* cprev = t ? cells.data() + (t - 1) * u : zero.data();
    add_recurrent(hprev, u, *w.recurrent, 0, W4, z);
    double* c = cells.data() + t * u;
    double* h = states.data() + t * u;
    for (std::size_t j = 0; j < u; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[u + j]);
      const double gg = std::tanh(z[2 * u + j]);
      const double og = sigmoid(z[3 * u + j]);
      z[j] = ig;
      z[u + j] = fg;
      z[2 * u + j] = gg;
      z[3 * u + j] = og;
      c[j] = fg * cprev[j] + ig * gg;
      h[j] = og * std::tanh(c[j]);
    }
  }
  Tensor out = collect_output(states, T, u, mode);
  if (trace) {
    trace->kind = CellKind::lstm;
    trace->units = u;
    trace->steps = T;
    trace->gates = std::move(gates);
    trace->cells = std::move(cells);
    trace->states = std::move(states);
  }
  return out;
}

Tensor gru_forward(const Tensor& x, const RecurrentWeights& w, std::size_t u, ReturnMode mode,
                   RecurrentTrace* trace) {
  check_recurrent(CellKind::gru, x, w, u);
  const std::size_t T = x.dim(0), d = x.dim(1), W3 = 3 * u;
  std::vector<double> gates(T * W3), states(T * u);
  std::vector<double> zero(u, 0.0), rh(u);
  for (std::size_t t = 0; t < T; ++t) {
    double* z = gates.data() + t * W3;
    input_projection(x.data() + t * d, d, *w.input, *w.bias, z, W3);
    const double* hprev = t ? states.data() + (t - 1) * u : zero.data();
    add_recurrent(hprev, u, *w.recurrent, 0, 2 * u, z);
    for (std::size_t j = 0; j < 2 * u; ++j) z[j] = sigmoid(z[j]);
    for (std::size_t j = 0; j < u; ++j) rh[j] = z[u + j] * hprev[j];
    add_recurrent(rh.data(), u, *w.recurrent, 2 * u, u, z + 2 * u);
    double* h = states.data() + t * u;
    for (std::size_t j = 0; j < u; ++j) {
      const double n = std::tanh(z[2 * u + j]);
      z[2 * u + j] = n;
      h[j] = z[j] * hprev[j] + (1.0 - z[j]) * n;
    }
  }
  Tensor out = collect_output(states, T, u, mode);
  if (trace) {
    trace->kind = CellKind::gru;
    trace->units = u;
    trace->steps = T;
    trace->gates = std::move(gates);
    trace->cells.clear();
    trace->states = std::move(states);
  }
  return out;
}

Tensor recurrent_forward(CellKind kind, const Tensor& x, const RecurrentWeights& w,
                         std::size_t units, ReturnMode mode, RecurrentTrace* trace) {
  return kind == CellKind::lstm ? lstm_forward(x, w, units, mode, trace)
                                : gru_forward(x, w, units, mode, trace);
}

namespace {

// dst[r] += Σ_j src[j] * M[r, col0 + j]   (row-vector times transposed block)
void add_times_transpose(const double* src, const Tensor& M, std::size_t col0, std::size_t ncols,
                         double* dst, std::size_t rows) {
  const std::size_t width = M.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* mr = M.data() + r * width + col0;
    double acc = 0.0;
    for (std::size_t j = 0; j < ncols; ++j) acc += src[j] * mr[j];
    dst[r] += acc;
  }
}

// G[r, col0 + j] += a[r] * b[j]
void add_outer(const double* a, std::size_t rows, const double* b, std::size_t col0,
               std::size_t ncols, Tensor& G) {
  const std::size_t width = G.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double av = a[r];
    if (av == 0.0) continue;
    double* gr = G.data() + r * width + col0;
    for (std::size_t j = 0; j < ncols; ++j) gr[j] += av * b[j];
  }
}

}  // namespace

Tensor recurrent_backward(const Tensor& x, const RecurrentWeights& w, const RecurrentTrace& tr,
                          ReturnMode mode, const Tensor& dout, const RecurrentGrads& g) {
  const std::size_t T = tr.steps, u = tr.units, d = x.dim(1);
  const std::size_t G = gate_count(tr.kind), W = G * u;
  if (mode == ReturnMode::sequence) {
    require(dout.shape() == Shape({T, u}), "recurrent backward: dout must be [T, u]");
  } else {
    require(dout.shape() == Shape({u}), "recurrent backward: dout must be [u]");
  }
  require(g.input->shape() == w.input->shape() && g.recurrent->shape() == w.recurrent->shape() &&
              g.bias->shape() == w.bias->shape(),
          "recurrent backward: grad shapes mismatched");

  Tensor dx({T, d});
  std::vector<double> dh(u, 0.0), dc(u, 0.0), dz(W), zero(u, 0.0), rh(u), drh(u);
  for (std::size_t t = T; t-- > 0;) {
    if (mode == ReturnMode::sequence) {
      for (std::size_t j = 0; j < u; ++j) dh[j] += dout.at(t, j);
    } else if (t == T - 1) {
      for (std::size_t j = 0; j < u; ++j) dh[j] += dout[j];
    }
    const double* z = tr.gates.data() + t * W;
    const double* hprev = t ? tr.states.data() + (t - 1) * u : zero.data();
    std::vector<double> dh_prev(u, 0.0);

    if (tr.kind == CellKind::lstm) {
      const double* c = tr.cells.data() + t * u;
      const double* cprev = t ? tr.cells.data() + (t - 1) * u : zero.data();
      for (std::size_t j = 0; j < u; ++j) {
        const double ig = z[j], fg = z[u + j], gg = z[2 * u + j], og = z[3 * u + j];
        const double tc = std::tanh(c[j]);
        const double dcj = dh[j] * og * (1.0 - tc * tc) + dc[j];
        dz[j] = dcj * gg * ig * (1.0 - ig);
        dz[u + j] = dcj * cprev[j] * fg * (1.0 - fg);
        dz[2 * u + j] = dcj * ig * (1.0 - gg * gg);
        dz[3 * u + j] = dh[j] * tc * og * (1.0 - og);
        dc[j] = dcj * fg;
      }
      add_outer(hprev, u, dz.data(), 0, W, *g.recurrent);
      add_times_transpose(dz.data(), *w.recurrent, 0, W, dh_prev.data(), u);
    } else {
      for (std::size_t j = 0; j < u; ++j) {
        const double zg = z[j], n = z[2 * u + j];
        dz[j] = dh[j] * (hprev[j] - n) * zg * (1.0 - zg);
        dz[2 * u + j] = dh[j] * (1.0 - zg) * (1.0 - n * n);
        dh_prev[j] = dh[j] * zg;
        rh[j] = z[u + j] * hprev[j];
      }
      // candidate path through (r*h) Un
      std::fill(drh.begin(), drh.end(), 0.0);
      add_times_transpose(dz.data() + 2 * u, *w.recurrent, 2 * u, u, drh.data(), u);
      add_outer(rh.data(), u, dz.data() + 2 * u, 2 * u, u, *g.recurrent);
      for (std::size_t j = 0; j < u; ++j) {
        const double rg = z[u + j];
        dz[u + j] = drh[j] * hprev[j] * rg * (1.0 - rg);
        dh_prev[j] += drh[j] * rg;
      }
      add_outer(hprev, u, dz.data(), 0, 2 * u, *g.recurrent);
      add_times_transpose(dz.data(), *w.recurrent, 0, 2 * u, dh_prev.data(), u);
    }

    const double* xt = x.data() + t * d;
    add_outer(xt, d, dz.data(), 0, W, *g.input);
    for (std::size_t j = 0; j < W; ++j) (*g.bias)[j] += dz[j];
    add_times_transpose(dz.data(), *w.input, 0, W, dx.data() + t * d, d);
    dh = std::move(dh_prev);
  }
  return dx;
}

Tensor reverse_rows(const Tensor& x) {
  require(x.rank() == 2, "reverse_rows: rank-2 tensor required");
  const std::size_t T = x.dim(0), w = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(x.data() + (T - 1 - t) * w, x.data() + (T - t) * w, y.data() + t * w);
  }
  return y;
}

Tensor bidirectional_forward(CellKind kind, const Tensor& x, const RecurrentWeights& fwd,
                             const RecurrentWeights& bwd, std::size_t u, ReturnMode mode,
                             BidirectionalTrace* trace) {
  require(x.rank() == 2, "bidirectional: x must be [T, d]");
  const std::size_t T = x.dim(0);
  Tensor xr = reverse_rows(x);
  RecurrentTrace tf, tb;
  Tensor of = recurrent_forward(kind, x, fwd, u, mode, &tf);
  Tensor ob = recurrent_forward(kind, xr, bwd, u, mode, &tb);
  Tensor out;
  if (mode == ReturnMode::last) {
    const Tensor parts[] = {of, ob};
    out = concat(parts);
  } else {
    out = Tensor({T, 2 * u});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < u; ++j) {
        out.at(t, j) = of.at(t, j);
        out.at(t, u + j) = ob.at(T - 1 - t, j);
      }
    }
  }
  if (trace) {
    trace->forward = std::move(tf);
    trace->backward = std::move(tb);
    trace->reversed_input = std::move(xr);
  }
  return out;
}

Tensor bidirectional_backward(const Tensor& x, const RecurrentWeights& fwd,
                              const RecurrentWeights& bwd, const BidirectionalTrace& trace,
                              ReturnMode mode, const Tensor& dout, const RecurrentGrads& gf,
                              const RecurrentGrads& gb) {
  const std::size_t T = x.dim(0), u = trace.forward.units;
  Tensor df, db;
  if (mode == ReturnMode::last) {
    require(dout.shape() == Shape({2 * u}), "bidirectional backward: dout must be [2u]");
    const std::size_t widths[] = {u, u};
    auto parts = split(dout, widths);
    df = std::move(parts[0]);
    db = std::move(parts[1]);
  } else {
    require(dout.shape() == Shape({T, 2 * u}), "bidirectional backward: dout must be [T, 2u]");
    df = Tensor({T, u});
    db = Tensor({T, u});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < u; ++j) {
        df.at(t, j) = dout.at(t, j);
        db.at(T - 1 - t, j) = dout.at(t, u + j);
      }
    }
  }
  Tensor dx = recurrent_backward(x, fwd, trace.forward, mode, df, gf);
  Tensor dxr = recurrent_backward(trace.reversed_input, bwd, trace.backward, mode, db, gb);
  dx.add_inplace(reverse_rows(dxr));
  return dx;
}

// --- loss --------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 1 && logits.size() >= 1, "softmax: logits must be a vector");
  const double mx = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor p(logits.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p.values()) v /= sum;
  return p;
}

SoftmaxXent softmax_xent(const Tensor& logits, std::size_t label) {
  require(logits.rank() == 1 && logits.size() >= 2, "softmax_xent: need at least 2 classes");
  if (label >= logits.size()) {
    throw ConfigError("softmax_xent: label " + std::to_string(label) + " out of range for " +
                      std::to_string(logits.size()) + " classes");
  }
  logits.require_finite("logits");
  const double mx = *std::max_element(logits.values().begin(), logits.values().end());
  double sum = 0.0;
  for (double v : logits.values()) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  SoftmaxXent r;
  r.probs = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) r.probs[i] = std::exp(logits[i] - log_z);
  r.loss = log_z - logits[label];
  return r;
}

Tensor softmax_xent_backward(const Tensor& probs, std::size_t label) {
  Tensor g = probs;
  g[label] -= 1.0;
  return g;
}

// --- dense stack -------------------------------------------------------------

DenseStack::DenseStack(std::string prefix, std::size_t in_width, std::vector<DenseBlockSpec> blocks)
    : prefix_(std::move(prefix)), in_width_(in_width), blocks_(std::move(blocks)) {
  if (in_width_ == 0) throw ConfigError(prefix_ + ": input width must be positive");
  for (const auto& b : blocks_) {
    if (b.width == 0) throw ConfigError(prefix_ + ": block widths must be positive");
    if (!(b.dropout >= 0.0 && b.dropout < 1.0)) {
      throw ConfigError(prefix_ + ": dropout rate out of range");
    }
  }
}

std::size_t DenseStack::out_width() const noexcept {
  return blocks_.empty() ? in_width_ : blocks_.back().width;
}

void DenseStack::init_params(ParamStore& params, Rng& rng) const {
  std::size_t in = in_width_;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::size_t out = blocks_[i].width;
    const std::string base = prefix_ + "." + std::to_string(i);
    params.add(base + ".W", glorot_uniform({in, out}, in, out, rng));
    params.add(base + ".b", Tensor({out}));
    in = out;
  }
}

Tensor DenseStack::forward(const ParamStore& params, const Tensor& x, Mode mode, Rng* rng,
                           Trace* trace) const {
  if (x.size() != in_width_) {
    throw ShapeError(prefix_ + ": expected input width " + std::to_string(in_width_) + ", got " +
                     x.shape_string());
  }
  if (trace) *trace = Trace{};
  Tensor h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string base = prefix_ + "." + std::to_string(i);
    if (trace) trace->inputs.push_back(h);
    Tensor y = dense_forward(h, params.value(base + ".W"), params.value(base + ".b"));
    if (blocks_[i].relu) y = relu(y);
    if (trace) trace->activated.push_back(y);
    Tensor scale;
    if (mode == Mode::train && blocks_[i].dropout > 0.0) {
      if (!rng) throw ConfigError(prefix_ + ": train-mode dropout needs an Rng");
      y = dropout(y, blocks_[i].dropout, mode, *rng, &scale);
    }
    if (trace) trace->scales.push_back(std::move(scale));
    h = std::move(y);
  }
  return h;
}

Tensor DenseStack::backward(ParamStore& params, const Trace& trace, const Tensor& dy) const {
  Tensor g = dy;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const std::string base = prefix_ + "." + std::to_string(i);
    const Tensor& scale = trace.scales[i];
    if (!scale.empty()) {
      for (std::size_t j = 0; j < g.size(); ++j) g[j] *= scale[j];
    }
    if (blocks_[i].relu) g = relu_backward(trace.activated[i], g);
    auto& W = params.get(base + ".W");
    auto& b = params.get(base + ".b");
    Tensor dx;
    dense_backward(trace.inputs[i], W.value, g, &dx, W.grad, b.grad);
    g = std::move(dx);
  }
  return g;
}

}  // namespace venuerank::nn
