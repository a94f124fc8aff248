#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "venuerank/params.hpp"

namespace venuerank::nn {

struct GradReport {
  double epsilon = 0.0;
  /// Largest relative error seen per parameter name.
  std::map<std::string, double> max_rel_error;
  std::size_t entries_checked = 0;

  double worst() const;
  bool passes(double tolerance) const { return worst() < tolerance; }
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Parameters with more entries than this are sampled.
  std::size_t max_entries = 200;
  std::uint64_t seed = 0;
};

/// Compares analytic gradients with central differences
/// (f(x+e) - f(x-e)) / 2e for every trainable parameter.
///
/// `loss` evaluates the objective at the current parameter values.
/// `compute_grads` must leave d loss / d param in each Parameter::grad.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradReport grad_check(ParamStore& params, const std::function<double()>& loss,
                      const std::function<void()>& compute_grads,
                      const GradCheckOptions& options = {});

}  // namespace venuerank::nn
