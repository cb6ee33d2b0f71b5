// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace uktr {

// Named trainable parameters, kept in creation order so serialization and
// optimizer state line up deterministically across runs.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : rng_(derive_seed(seed, "init")) {}

  // U(-1/sqrt(fan_in), +1/sqrt(fan_in)); used for linear and conv weights.
  Tensor fan_in_uniform(const std::string& name, std::vector<int> shape,
                        int fan_in);
  Tensor zeros(const std::string& name, std::vector<int> shape);
  Tensor ones(const std::string& name, std::vector<int> shape);
  // N(0, sd^2); used for embedding tables.
  Tensor normal_init(const std::string& name, std::vector<int> shape,
                     double sd);

  bool has(const std::string& name) const { return by_name_.count(name) > 0; }
  Tensor get(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }

  // Total element count over parameters whose name starts with `prefix`.
  int64_t count_params(const std::string& prefix = "") const;
  void zero_grads();

 private:
  Tensor add(const std::string& name, Tensor t);

  Rng rng_;
  std::vector<std::string> order_;
  std::map<std::string, Tensor> by_name_;
};

}  // namespace uktr
