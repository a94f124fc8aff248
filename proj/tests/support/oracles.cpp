#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace oracle {

Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b.empty() ? 0 : b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < c[i].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Vec dense(const Vec& x, const Mat& W, const Vec& b) {
  Vec y = b;
  for (std::size_t o = 0; o < y.size(); ++o)
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += x[i] * W[i][o];
  return y;
}

Mat conv1d(const Mat& x, const Vec& K, std::size_t k, std::size_t F, const Vec& bias) {
  const std::size_t d = x[0].size();
  Mat y;
  for (std::size_t t = 0; t + k <= x.size(); ++t) {
    Vec row(F);
    for (std::size_t f = 0; f < F; ++f) {
      double s = bias[f];
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < d; ++c) s += x[t + i][c] * K[(i * d + c) * F + f];
      row[f] = s;
    }
    y.push_back(row);
  }
  return y;
}

Vec column_max(const Mat& x, std::vector<std::size_t>* argmax) {
  Vec m(x[0].size());
  if (argmax) argmax->assign(m.size(), 0);
  for (std::size_t c = 0; c < m.size(); ++c) {
    m[c] = x[0][c];
    for (std::size_t r = 1; r < x.size(); ++r) {
      if (x[r][c] > m[c]) {
        m[c] = x[r][c];
        if (argmax) (*argmax)[c] = r;
      }
    }
  }
  return m;
}

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double affine(const Vec& x, const Mat& W, std::size_t col) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * W[i][col];
  return s;
}

}  // namespace

Mat lstm(const Mat& x, const Mat& Wx, const Mat& Wh, const Vec& b, std::size_t u) {
  Vec h(u, 0.0), c(u, 0.0);
  Mat out;
  for (const auto& xt : x) {
    Vec hn(u), cn(u);
    for (std::size_t j = 0; j < u; ++j) {
      const double i = sig(affine(xt, Wx, j) + affine(h, Wh, j) + b[j]);
      const double f = sig(affine(xt, Wx, u + j) + affine(h, Wh, u + j) + b[u + j]);
      const double g = std::tanh(affine(xt, Wx, 2 * u + j) + affine(h, Wh, 2 * u + j) + b[2 * u + j]);
      const double o = sig(affine(xt, Wx, 3 * u + j) + affine(h, Wh, 3 * u + j) + b[3 * u + j]);
      cn[j] = f * c[j] + i * g;
      hn[j] = o * std::tanh(cn[j]);
    }
    h = hn;
    c = cn;
    out.push_back(h);
  }
  return out;
}

Mat gru(const Mat& x, const Mat& Wx, const Mat& Wh, const Vec& b, std::size_t u) {
  Vec h(u, 0.0);
  Mat out;
  for (const auto& xt : x) {
    Vec z(u), r(u), rh(u), hn(u);
    for (std::size_t j = 0; j < u; ++j) {
      z[j] = sig(affine(xt, Wx, j) + affine(h, Wh, j) + b[j]);
      r[j] = sig(affine(xt, Wx, u + j) + affine(h, Wh, u + j) + b[u + j]);
      rh[j] = r[j] * h[j];
    }
    for (std::size_t j = 0; j < u; ++j) {
      const double n = std::tanh(affine(xt, Wx, 2 * u + j) + affine(rh, Wh, 2 * u + j) + b[2 * u + j]);
      hn[j] = z[j] * h[j] + (1.0 - z[j]) * n;
    }
    h = hn;
    out.push_back(h);
  }
  return out;
}

double cosine(const Vec& a, const Vec& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double hitrate(const std::vector<std::vector<std::string>>& rankings, const std::vector<std::string>& labels,
               std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const std::set<std::string> top(rankings[s].begin(), rankings[s].begin() + static_cast<std::ptrdiff_t>(k));
    hits += top.count(labels[s]);
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<Confusion> confusion_at_k(const std::vector<std::vector<std::string>>& rankings,
                                      const std::vector<std::string>& labels, std::size_t k,
                                      const std::vector<std::string>& classes) {
  std::vector<Confusion> out(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const auto end = rankings[s].begin() + static_cast<std::ptrdiff_t>(k);
      const bool predicted = std::find(rankings[s].begin(), end, classes[c]) != end;
      const bool actual = labels[s] == classes[c];
      if (predicted && actual) ++out[c].tp;
      if (predicted && !actual) ++out[c].fp;
      if (!predicted && actual) ++out[c].fn;
      if (!predicted && !actual) ++out[c].tn;
    }
  }
  return out;
}

double macro_accuracy(const std::vector<Confusion>& per_class) {
  double sum = 0.0;
  for (const auto& c : per_class) {
    sum += static_cast<double>(c.tp + c.tn) / static_cast<double>(c.tp + c.tn + c.fp + c.fn);
  }
  return sum / static_cast<double>(per_class.size());
}

}  // namespace oracle
