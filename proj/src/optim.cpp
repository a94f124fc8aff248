#include "venuerank/optim.hpp"

#include <cmath>

#include "venuerank/errors.hpp"

namespace venuerank::nn {

void optimizer_step(const OptimizerHyper& hyper, std::span<double> params,
                    std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("optimizer: non-finite gradient");
  }
  const double lr = hyper.learning_rate;
  if (hyper.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
    return;
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + hyper.epsilon);
  }
}

void Optimizer::step(ParamStore& params) {
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    optimizer_step(hyper_, p.value.values(), p.grad.values(), state_[p.name]);
  }
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

}  // namespace venuerank::nn
