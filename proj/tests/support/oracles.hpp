#pragma once

// Reference implementations used as test oracles. Each is written directly
// from the defining formula with plain loops and shares no code with the
// library it checks.

#include <cstddef>
#include <string>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, Mat[r][c]

Mat matmul(const Mat& a, const Mat& b);

/// y[o] = b[o] + sum_i x[i] * W[i][o].
Vec dense(const Vec& x, const Mat& W, const Vec& b);

/// Valid 1-D convolution. K[k][d][F] as a flat vector indexed (i*d + c)*F + f.
Mat conv1d(const Mat& x, const Vec& K, std::size_t k, std::size_t F, const Vec& bias);

/// Per-column maximum and the first row attaining it.
Vec column_max(const Mat& x, std::vector<std::size_t>* argmax = nullptr);

/// Scalar-by-scalar LSTM over the sequence with zero initial state. Weight
/// matrices indexed W[in][gate*u + j] with gates (i, f, g, o).
Mat lstm(const Mat& x, const Mat& Wx, const Mat& Wh, const Vec& b, std::size_t u);

/// GRU with the reset gate applied to the previous state before Un; gates
/// (z, r, n).
Mat gru(const Mat& x, const Mat& Wx, const Mat& Wh, const Vec& b, std::size_t u);

double cosine(const Vec& a, const Vec& b);

/// Label is a member of the first k entries.
double hitrate(const std::vector<std::vector<std::string>>& rankings, const std::vector<std::string>& labels,
               std::size_t k);

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

/// Per-class confusion counts at k, one entry per class in `classes` order.
std::vector<Confusion> confusion_at_k(const std::vector<std::vector<std::string>>& rankings,
                                      const std::vector<std::string>& labels, std::size_t k,
                                      const std::vector<std::string>& classes);

double macro_accuracy(const std::vector<Confusion>& per_class);

}  // namespace oracle
