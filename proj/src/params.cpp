#include "venuerank/params.hpp"

#include <cmath>

#include "venuerank/errors.hpp"

namespace venuerank::nn {

Parameter& ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Tensor grad(init.shape(), 0.0);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{name, std::move(init), std::move(grad), trainable});
  return params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.params_.size() != params_.size()) throw ShapeError("parameter sets differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i];
    auto& dst = params_[i];
    if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
      throw ShapeError("parameter mismatch at '" + dst.name + "'");
    }
    dst.value = src.value;
  }
}

Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace venuerank::nn
