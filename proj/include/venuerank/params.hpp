#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "venuerank/rng.hpp"
#include "venuerank/tensor.hpp"

namespace venuerank::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Named parameter tensors in insertion order. Insertion order is the
/// checkpoint manifest order, so it must be a pure function of the config.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init, bool trainable = true);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return get(name).value; }
  Tensor& grad(const std::string& name) { return get(name).grad; }

  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  /// Total number of scalar entries.
  std::size_t scalar_count() const;

  void zero_grad();
  /// Copy every value from `other`; names and shapes must match exactly.
  void assign_values(const ParamStore& other);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform Glorot initialisation: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace venuerank::nn
