#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "venuerank/params.hpp"

namespace venuerank::nn {

enum class OptimizerKind { sgd, adam };

struct OptimizerHyper {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moment estimates for one parameter tensor.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

/// One in-place update of `params` from `grads`. Throws on size mismatch or a
/// non-finite gradient; `state` is only touched for Adam.
void optimizer_step(const OptimizerHyper& hyper, std::span<double> params,
                    std::span<const double> grads, AdamState& state);

/// Applies optimizer_step to every trainable parameter of a store.
class Optimizer {
 public:
  explicit Optimizer(OptimizerHyper hyper) : hyper_(hyper) {}

  void step(ParamStore& params);
  const OptimizerHyper& hyper() const noexcept { return hyper_; }

 private:
  OptimizerHyper hyper_;
  std::map<std::string, AdamState> state_;
};

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& s);

}  // namespace venuerank::nn
