#include "venuerank/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "venuerank/errors.hpp"
#include "venuerank/rng.hpp"

namespace venuerank::nn {

double GradReport::worst() const {
  double w = 0.0;
  for (const auto& [name, e] : max_rel_error) w = std::max(w, e);
  return w;
}

GradReport grad_check(ParamStore& params, const std::function<double()>& loss,
                      const std::function<void()>& compute_grads,
                      const GradCheckOptions& options) {
  GradReport report;
  report.epsilon = options.epsilon;
  compute_grads();

  Rng rng(options.seed);
  const double eps = options.epsilon;
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    p.grad.require_finite("gradient of " + p.name);
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > options.max_entries) {
      rng.shuffle(idx);
      idx.resize(options.max_entries);
      std::sort(idx.begin(), idx.end());
    }
    double worst = 0.0;
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = loss();
      p.value[i] = saved - eps;
      const double down = loss();
      p.value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss while perturbing " + p.name);
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
      ++report.entries_checked;
    }
    report.max_rel_error[p.name] = worst;
  }
  return report;
}

}  // namespace venuerank::nn
