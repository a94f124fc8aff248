#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "../support/convert.hpp"
#include "venuerank/errors.hpp"
#include "venuerank/gradcheck.hpp"
#include "venuerank/nn.hpp"
#include "venuerank/optim.hpp"

using namespace venuerank;
using namespace venuerank::nn;
using testing_support::max_abs_diff;
using testing_support::random_tensor;
using testing_support::to_mat;
using testing_support::to_vec;

// --- dense ---------------------------------------------------------------------

TEST(Dense, IdentityWeights) {
  const Tensor y = dense_forward(Tensor::vector({1, 2}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor({2}));
  EXPECT_EQ(y, Tensor::vector({1, 2}));
}

TEST(Dense, HandArithmetic) {
  const Tensor y = dense_forward(Tensor::vector({1, 1}), Tensor::matrix({{2}, {3}}), Tensor::vector({1}));
  EXPECT_EQ(y, Tensor::vector({6}));
}

TEST(Dense, MatchesTripleLoop) {
  Rng rng(11);
  const Tensor x = random_tensor({4, 8}, rng), W = random_tensor({8, 3}, rng);
  const Tensor y = dense_forward(x, W, Tensor({3}));
  EXPECT_LT(max_abs_diff(y, oracle::matmul(to_mat(x), to_mat(W))), 1e-12);
}

TEST(Dense, RejectsMismatch) {
  EXPECT_THROW(dense_forward(Tensor({3}), Tensor({2, 2}), Tensor({2})), ShapeError);
}

// --- conv / pool -----------------------------------------------------------------

TEST(Conv1d, AllOnesKernelGivesWindowSums) {
  Rng rng(3);
  const Tensor x = random_tensor({5, 2}, rng);
  const Tensor y = conv1d_forward(x, Tensor({2, 2, 1}, 1.0), Tensor({1}));
  ASSERT_EQ(y.shape(), (Shape{4, 1}));
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_NEAR(y.at(t, 0), x.at(t, 0) + x.at(t, 1) + x.at(t + 1, 0) + x.at(t + 1, 1), 1e-15);
  }
}

TEST(Conv1d, ChannelSelector) {
  Rng rng(4);
  const Tensor x = random_tensor({6, 3}, rng);
  Tensor K({1, 3, 1});
  K.at(0, 0, 0) = 1.0;
  const Tensor y = conv1d_forward(x, K, Tensor({1}));
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(y.at(t, 0), x.at(t, 0));
}

TEST(Conv1d, FullScaleShape) {
  EXPECT_EQ(conv1d_forward(Tensor({128, 300}), Tensor({3, 300, 200}), Tensor({200})).shape(),
            (Shape{126, 200}));
}

TEST(Conv1d, ShortInputThrows) {
  EXPECT_THROW(conv1d_forward(Tensor({2, 3}), Tensor({3, 3, 1}), Tensor({1})), ShapeError);
}

TEST(Conv1d, MatchesNestedLoops) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t M = 3 + rng.index(6), d = 1 + rng.index(4), k = 1 + rng.index(3), F = 1 + rng.index(4);
    const Tensor x = random_tensor({M, d}, rng), K = random_tensor({k, d, F}, rng), b = random_tensor({F}, rng);
    const Tensor y = conv1d_forward(x, K, b);
    EXPECT_LT(max_abs_diff(y, oracle::conv1d(to_mat(x), to_vec(K), k, F, to_vec(b))), 1e-12);
  }
}

TEST(GlobalMaxPool, Basic) {
  EXPECT_EQ(global_max_pool(Tensor::matrix({{1, 5}, {3, 2}})).out, Tensor::vector({3, 5}));
  EXPECT_EQ(global_max_pool(Tensor({4, 3}, 2.5)).out, Tensor({3}, 2.5));
}

TEST(GlobalMaxPool, MatchesScanAndRoutesToFirstArgmax) {
  Rng rng(6);
  const Tensor x = random_tensor({7, 4}, rng);
  std::vector<std::size_t> argmax;
  const auto expect = oracle::column_max(to_mat(x), &argmax);
  const auto pr = global_max_pool(x);
  EXPECT_EQ(to_vec(pr.out), expect);
  EXPECT_EQ(pr.argmax, argmax);

  const Tensor ties({3, 1}, 1.0);
  const auto tp = global_max_pool(ties);
  const Tensor g = global_max_pool_backward(tp.argmax, 3, Tensor::vector({2.0}));
  EXPECT_EQ(g, Tensor::matrix({{2.0}, {0.0}, {0.0}}));
}

TEST(GlobalMaxPool, Monotone) {
  Rng rng(7);
  const Tensor x = random_tensor({5, 3}, rng);
  Tensor bigger = x;
  for (auto& v : bigger.values()) v += rng.uniform(0.0, 0.5);
  const auto a = global_max_pool(x).out, b = global_max_pool(bigger).out;
  for (std::size_t i = 0; i < 3; ++i) EXPECT_GE(b[i], a[i]);
  const auto ra = relu(x), rb = relu(bigger);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_GE(rb[i], ra[i]);
}

// --- recurrent ---------------------------------------------------------------------

namespace {

struct Cell {
  Tensor Wx, Wh, b;
  RecurrentWeights w() const { return {&Wx, &Wh, &b}; }
};

Cell random_cell(CellKind kind, std::size_t d, std::size_t u, Rng& rng, double scale = 0.8) {
  const std::size_t G = gate_count(kind);
  return {random_tensor({d, G * u}, rng, -scale, scale), random_tensor({u, G * u}, rng, -scale, scale),
          random_tensor({G * u}, rng, -scale, scale)};
}

oracle::Mat oracle_run(CellKind kind, const Tensor& x, const Cell& c, std::size_t u) {
  return kind == CellKind::lstm ? oracle::lstm(to_mat(x), to_mat(c.Wx), to_mat(c.Wh), to_vec(c.b), u)
                                : oracle::gru(to_mat(x), to_mat(c.Wx), to_mat(c.Wh), to_vec(c.b), u);
}

}  // namespace

TEST(Recurrent, ZeroParametersGiveZeroOutputs) {
  Rng rng(1);
  const Tensor x = random_tensor({4, 3}, rng);
  for (CellKind kind : {CellKind::lstm, CellKind::gru}) {
    const std::size_t G = gate_count(kind);
    const Tensor Wx({3, G * 2}), Wh({2, G * 2}), b({G * 2});
    const Tensor y = recurrent_forward(kind, x, {&Wx, &Wh, &b}, 2, ReturnMode::sequence);
    EXPECT_EQ(y, Tensor({4, 2}));
  }
}

TEST(Recurrent, ScalarHandCase) {
  // d = u = 1, three steps, every gate weight picked by hand.
  const Tensor x = Tensor::matrix({{0.5}, {-1.0}, {2.0}});
  const Tensor lWx = Tensor::matrix({{0.3, -0.2, 0.7, 0.1}}), lWh = Tensor::matrix({{0.4, 0.5, -0.6, 0.2}});
  const Tensor lb = Tensor::vector({0.1, 1.0, -0.1, 0.0});
  const Tensor y = lstm_forward(x, {&lWx, &lWh, &lb}, 1, ReturnMode::sequence);
  double h = 0, c = 0;
  auto s = [](double v) { return 1 / (1 + std::exp(-v)); };
  for (double xt : {0.5, -1.0, 2.0}) {
    const double i = s(0.3 * xt + 0.4 * h + 0.1), f = s(-0.2 * xt + 0.5 * h + 1.0);
    const double g = std::tanh(0.7 * xt - 0.6 * h - 0.1), o = s(0.1 * xt + 0.2 * h);
    c = f * c + i * g;
    h = o * std::tanh(c);
  }
  EXPECT_NEAR(y.at(2, 0), h, 1e-14);

  const Tensor gWx = Tensor::matrix({{0.6, -0.4, 0.9}}), gWh = Tensor::matrix({{-0.3, 0.8, 0.5}});
  const Tensor gb = Tensor::vector({0.2, -0.1, 0.05});
  const Tensor yg = gru_forward(x, {&gWx, &gWh, &gb}, 1, ReturnMode::last);
  h = 0;
  for (double xt : {0.5, -1.0, 2.0}) {
    const double z = s(0.6 * xt - 0.3 * h + 0.2), r = s(-0.4 * xt + 0.8 * h - 0.1);
    const double n = std::tanh(0.9 * xt + 0.5 * (r * h) + 0.05);
    h = z * h + (1 - z) * n;
  }
  EXPECT_NEAR(yg[0], h, 1e-14);
}

TEST(Recurrent, MatchesScalarRecurrenceOracle) {
  Rng rng(21);
  for (CellKind kind : {CellKind::lstm, CellKind::gru}) {
    for (int rep = 0; rep < 10; ++rep) {
      const std::size_t T = 1 + rng.index(6), d = 1 + rng.index(4), u = 1 + rng.index(4);
      const Tensor x = random_tensor({T, d}, rng);
      const Cell c = random_cell(kind, d, u, rng);
      const Tensor y = recurrent_forward(kind, x, c.w(), u, ReturnMode::sequence);
      EXPECT_LT(max_abs_diff(y, oracle_run(kind, x, c, u)), 1e-12);
      const Tensor last = recurrent_forward(kind, x, c.w(), u, ReturnMode::last);
      ASSERT_EQ(last.shape(), (Shape{u}));
      for (std::size_t j = 0; j < u; ++j) EXPECT_EQ(last[j], y.at(T - 1, j));
    }
  }
}

TEST(Bidirectional, TwoPassConstruction) {
  Rng rng(31);
  for (CellKind kind : {CellKind::lstm, CellKind::gru}) {
    const std::size_t T = 5, d = 3, u = 4;
    const Tensor x = random_tensor({T, d}, rng);
    const Cell f = random_cell(kind, d, u, rng), b = random_cell(kind, d, u, rng);
    const Tensor y = bidirectional_forward(kind, x, f.w(), b.w(), u, ReturnMode::sequence);
    ASSERT_EQ(y.shape(), (Shape{T, 2 * u}));
    const auto fwd = oracle_run(kind, x, f, u);
    auto rx = to_mat(x);
    std::reverse(rx.begin(), rx.end());
    const Tensor rxt = reverse_rows(x);
    const auto bwd = oracle_run(kind, rxt, b, u);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < u; ++j) {
        EXPECT_NEAR(y.at(t, j), fwd[t][j], 1e-12);
        EXPECT_NEAR(y.at(t, u + j), bwd[T - 1 - t][j], 1e-12);
      }
    }
    const Tensor last = bidirectional_forward(kind, x, f.w(), b.w(), u, ReturnMode::last);
    for (std::size_t j = 0; j < u; ++j) {
      EXPECT_NEAR(last[j], fwd[T - 1][j], 1e-12);
      EXPECT_NEAR(last[u + j], bwd[T - 1][j], 1e-12);
    }
  }
}

TEST(Bidirectional, PalindromeWithSharedWeightsIsMirrored) {
  Rng rng(32);
  const Tensor half = random_tensor({3, 2}, rng);
  Tensor x({5, 2});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 2; ++c) x.at(t, c) = half.at(std::min(t, 4 - t), c);
  const Cell w = random_cell(CellKind::gru, 2, 3, rng);
  const Tensor y = bidirectional_forward(CellKind::gru, x, w.w(), w.w(), 3, ReturnMode::sequence);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y.at(t, j), y.at(4 - t, 3 + j), 1e-14);
}

// --- dropout / softmax ------------------------------------------------------------------

TEST(Dropout, InferAndZeroRateAreIdentity) {
  Rng rng(2);
  const Tensor x = random_tensor({50}, rng);
  EXPECT_EQ(dropout(x, 0.4, Mode::infer, 1), x);
  EXPECT_EQ(dropout(x, 0.0, Mode::train, 1), x);
  EXPECT_THROW(dropout(x, 1.0, Mode::train, 1), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, Mode::train, 1), ConfigError);
}

TEST(Dropout, SurvivorFraction) {
  const Tensor y = dropout(Tensor({100000}, 1.0), 0.5, Mode::train, 1234);
  std::size_t alive = 0;
  for (double v : y.values()) {
    if (v != 0.0) {
      ++alive;
      EXPECT_EQ(v, 2.0);
    }
  }
  EXPECT_NEAR(static_cast<double>(alive) / 1e5, 0.5, 0.01);
}

TEST(Softmax, UniformLogits) {
  const auto r = softmax_xent(Tensor({4}, 0.7), 2);
  for (double p : r.probs.values()) EXPECT_NEAR(p, 0.25, 1e-15);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-15);
}

TEST(Softmax, NoOverflow) {
  const auto r = softmax_xent(Tensor::vector({1000, 0}), 0);
  EXPECT_TRUE(r.probs.all_finite());
  EXPECT_NEAR(r.probs[0], 1.0, 1e-15);
  EXPECT_NEAR(r.probs[1], 0.0, 1e-15);
  EXPECT_THROW(softmax_xent(Tensor::vector({1, 2}), 2), std::exception);
}

TEST(Softmax, DirectFormulaAndSumToOne) {
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor z = random_tensor({5}, rng, -20, 20);
    const auto r = softmax_xent(z, 3);
    long double denom = 0;
    for (double v : z.values()) denom += std::exp(static_cast<long double>(v));
    long double sum = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      const long double p = std::exp(static_cast<long double>(z[i])) / denom;
      EXPECT_NEAR(r.probs[i], static_cast<double>(p), 1e-14);
      EXPECT_GT(r.probs[i], 0.0);
      sum += r.probs[i];
    }
    EXPECT_NEAR(static_cast<double>(sum), 1.0, 1e-12);
    EXPECT_NEAR(r.loss, -std::log(static_cast<double>(std::exp(static_cast<long double>(z[3])) / denom)), 1e-12);
  }
}

// --- gradient checks ------------------------------------------------------------------

TEST(GradCheck, DenseSoftmaxFragment) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    ParamStore p;
    p.add("x", random_tensor({6}, rng));
    p.add("W", random_tensor({6, 4}, rng));
    p.add("b", random_tensor({4}, rng));
    const std::size_t label = rng.index(4);
    auto loss = [&] { return softmax_xent(dense_forward(p.value("x"), p.value("W"), p.value("b")), label).loss; };
    auto grads = [&] {
      p.zero_grad();
      const auto r = softmax_xent(dense_forward(p.value("x"), p.value("W"), p.value("b")), label);
      Tensor dx;
      dense_backward(p.value("x"), p.value("W"), softmax_xent_backward(r.probs, label), &dx, p.grad("W"),
                     p.grad("b"));
      p.grad("x") = dx;
    };
    EXPECT_LT(grad_check(p, loss, grads, {1e-5, 200, seed}).worst(), 1e-6) << "seed " << seed;
  }
}

namespace {

// Smallest gap between the best and second-best row over all columns.
double pool_margin(const Tensor& c) {
  double margin = INFINITY;
  for (std::size_t f = 0; f < c.dim(1); ++f) {
    double best = -INFINITY, second = -INFINITY;
    for (std::size_t t = 0; t < c.dim(0); ++t) {
      const double v = c.at(t, f);
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    margin = std::min(margin, best - second);
  }
  return margin;
}

}  // namespace

TEST(GradCheck, ConvPoolDenseFragment) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    ParamStore p;
    // Redraw until every pooled column wins by a clear margin, so no step of
    // the check moves the argmax.
    Tensor x, K, kb;
    do {
      x = random_tensor({7, 3}, rng);
      K = random_tensor({2, 3, 4}, rng);
      kb = random_tensor({4}, rng);
    } while (pool_margin(conv1d_forward(x, K, kb)) < 1e-3);
    p.add("x", x);
    p.add("K", K);
    p.add("kb", kb);
    p.add("W", random_tensor({4, 3}, rng));
    p.add("b", random_tensor({3}, rng));
    const std::size_t label = rng.index(3);
    auto forward = [&](PoolResult* pr) {
      const Tensor c = conv1d_forward(p.value("x"), p.value("K"), p.value("kb"));
      *pr = global_max_pool(c);
      return softmax_xent(dense_forward(pr->out, p.value("W"), p.value("b")), label);
    };
    auto loss = [&] {
      PoolResult pr;
      return forward(&pr).loss;
    };
    auto grads = [&] {
      p.zero_grad();
      PoolResult pr;
      const auto r = forward(&pr);
      Tensor dpool, dx;
      dense_backward(pr.out, p.value("W"), softmax_xent_backward(r.probs, label), &dpool, p.grad("W"), p.grad("b"));
      const Tensor dc = global_max_pool_backward(pr.argmax, 6, dpool);
      conv1d_backward(p.value("x"), p.value("K"), dc, &dx, p.grad("K"), p.grad("kb"));
      p.grad("x") = dx;
    };
    EXPECT_LT(grad_check(p, loss, grads, {1e-5, 200, seed}).worst(), 1e-5) << "seed " << seed;
  }
}

TEST(GradCheck, RecurrentFragments) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    for (CellKind kind : {CellKind::gru, CellKind::lstm}) {
      for (bool bi : {false, true}) {
        Rng rng(seed * 7 + (kind == CellKind::gru ? 0 : 1) + (bi ? 2 : 0));
        const std::size_t T = 4, d = 3, u = 3, G = gate_count(kind);
        ParamStore p;
        p.add("x", random_tensor({T, d}, rng));
        for (const char* dir : {"f", "b"}) {
          p.add(std::string(dir) + ".Wx", random_tensor({d, G * u}, rng, -0.7, 0.7));
          p.add(std::string(dir) + ".Wh", random_tensor({u, G * u}, rng, -0.7, 0.7));
          p.add(std::string(dir) + ".b", random_tensor({G * u}, rng, -0.7, 0.7));
        }
        const std::size_t out = bi ? 2 * u : u;
        p.add("W", random_tensor({out, 3}, rng));
        p.add("bo", random_tensor({3}, rng));
        const std::size_t label = rng.index(3);
        auto w = [&](const char* dir) {
          const std::string s(dir);
          return RecurrentWeights{&p.value(s + ".Wx"), &p.value(s + ".Wh"), &p.value(s + ".b")};
        };
        auto g = [&](const char* dir) {
          const std::string s(dir);
          return RecurrentGrads{&p.grad(s + ".Wx"), &p.grad(s + ".Wh"), &p.grad(s + ".b")};
        };
        RecurrentTrace rt;
        BidirectionalTrace bt;
        auto feature = [&] {
          return bi ? bidirectional_forward(kind, p.value("x"), w("f"), w("b"), u, ReturnMode::last, &bt)
                    : recurrent_forward(kind, p.value("x"), w("f"), u, ReturnMode::last, &rt);
        };
        auto loss = [&] { return softmax_xent(dense_forward(feature(), p.value("W"), p.value("bo")), label).loss; };
        auto grads = [&] {
          p.zero_grad();
          const Tensor h = feature();
          const auto r = softmax_xent(dense_forward(h, p.value("W"), p.value("bo")), label);
          Tensor dh;
          dense_backward(h, p.value("W"), softmax_xent_backward(r.probs, label), &dh, p.grad("W"), p.grad("bo"));
          p.grad("x") = bi ? bidirectional_backward(p.value("x"), w("f"), w("b"), bt, ReturnMode::last, dh, g("f"),
                                                    g("b"))
                           : recurrent_backward(p.value("x"), w("f"), rt, ReturnMode::last, dh, g("f"));
        };
        EXPECT_LT(grad_check(p, loss, grads, {1e-5, 200, seed}).worst(), 1e-4)
            << "seed " << seed << (kind == CellKind::gru ? " gru" : " lstm") << (bi ? " bi" : "");
      }
    }
  }
}

TEST(GradCheck, DenseStackWithFixedDropoutMask) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    const DenseStack stack("s", 5, {{6, true, 0.3}, {4, true, 0.3}, {3, false, 0.0}});
    ParamStore p;
    stack.init_params(p, rng);
    for (auto& prm : p.all())
      if (prm.name.ends_with(".b")) prm.value = random_tensor(prm.value.shape(), rng, 0.05, 0.3);
    p.add("x", random_tensor({5}, rng));
    const std::size_t label = rng.index(3);
    const std::uint64_t mask = rng.next();
    auto loss = [&] {
      Rng m(mask);
      return softmax_xent(stack.forward(p, p.value("x"), Mode::train, &m, nullptr), label).loss;
    };
    auto grads = [&] {
      p.zero_grad();
      Rng m(mask);
      DenseStack::Trace tr;
      const auto r = softmax_xent(stack.forward(p, p.value("x"), Mode::train, &m, &tr), label);
      p.grad("x") = stack.backward(p, tr, softmax_xent_backward(r.probs, label));
    };
    EXPECT_LT(grad_check(p, loss, grads, {1e-5, 200, seed}).worst(), 1e-4) << "seed " << seed;
  }
}

// --- optimizers -----------------------------------------------------------------------

TEST(Optimizer, SgdStep) {
  std::vector<double> theta{1.0};
  AdamState st;
  optimizer_step({OptimizerKind::sgd, 0.1}, theta, std::vector<double>{2.0}, st);
  EXPECT_DOUBLE_EQ(theta[0], 0.8);
}

TEST(Optimizer, AdamFirstStepIsLearningRate) {
  for (double g : {1e-4, 0.5, 30.0, -7.0}) {
    std::vector<double> theta{0.0};
    AdamState st;
    optimizer_step({}, theta, std::vector<double>{g}, st);
    EXPECT_NEAR(std::abs(theta[0]), 1e-3, 1e-6) << g;
    EXPECT_LT(theta[0] * g, 0.0);
  }
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
  std::vector<double> a{0.3, -2.0}, b{0.3, -2.0};
  AdamState sa, sb;
  optimizer_step({OptimizerKind::sgd, 0.1}, a, std::vector<double>{0, 0}, sa);
  optimizer_step({}, b, std::vector<double>{0, 0}, sb);
  EXPECT_EQ(a, (std::vector<double>{0.3, -2.0}));
  EXPECT_NEAR(b[0], 0.3, 1e-12);
  EXPECT_NEAR(b[1], -2.0, 1e-12);
}

TEST(Optimizer, RejectsBadInput) {
  std::vector<double> theta{1.0};
  AdamState st;
  EXPECT_THROW(optimizer_step({}, theta, std::vector<double>{1, 2}, st), ShapeError);
  EXPECT_THROW(optimizer_step({}, theta, std::vector<double>{NAN}, st), NumericError);
}
