// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "param_store.hpp"

#include <cmath>

#include "common.hpp"

namespace uktr {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (by_name_.count(name)) fail_usage("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  order_.push_back(name);
  by_name_.emplace(name, t);
  return t;
}

Tensor ParamStore::fan_in_uniform(const std::string& name,
                                  std::vector<int> shape, int fan_in) {
  if (fan_in <= 0) fail_usage("fan_in_uniform: fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng_.uniform(-bound, bound);
  return add(name, Tensor(std::move(shape), std::move(v)));
}

Tensor ParamStore::zeros(const std::string& name, std::vector<int> shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamStore::ones(const std::string& name, std::vector<int> shape) {
  return add(name, Tensor::full(std::move(shape), 1.0));
}

Tensor ParamStore::normal_init(const std::string& name, std::vector<int> shape,
                               double sd) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng_.normal(0.0, sd);
  return add(name, Tensor(std::move(shape), std::move(v)));
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) fail_usage("unknown parameter: " + name);
  return it->second;
}

int64_t ParamStore::count_params(const std::string& prefix) const {
  int64_t total = 0;
  for (const auto& name : order_) {
    if (name.rfind(prefix, 0) != 0) continue;
    total += by_name_.at(name).numel();
  }
  return total;
}

void ParamStore::zero_grads() {
  for (const auto& name : order_) by_name_.at(name).zero_grad();
}

}  // namespace uktr
