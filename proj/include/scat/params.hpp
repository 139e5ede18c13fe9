// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "scat/grid.hpp"

namespace scat {

struct Param {
    DenseGrid value;
    DenseGrid grad; // same shape as value, zero-initialized
};

/// Named parameter tensors with paired gradient accumulators. Iteration order
/// is insertion order so optimizer state and packing are deterministic.
/// Storage is a deque so references returned by add() stay valid as more
/// parameters are registered.
class ParamStore {
  public:
    Param& add(const std::string& name, std::vector<std::size_t> shape);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::string>& names() const { return order_; }
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

    void zero_grads();
    std::size_t step_count() const { return step_count_; }
    void set_step_count(std::size_t n) { step_count_ = n; }
    void bump_step() { ++step_count_; }

    std::size_t total_size() const;

  private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, std::size_t> index_;
    std::deque<Param> items_;
    std::size_t step_count_ = 0;
};

/// Flatten the named subset into one vector (concatenated in list order).
DenseGrid pack_values(const ParamStore& store, const std::vector<std::string>& names);
DenseGrid pack_grads(const ParamStore& store, const std::vector<std::string>& names);
void unpack_values(ParamStore& store, const std::vector<std::string>& names,
                   const DenseGrid& packed);

struct AdamWConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Adam with decoupled weight decay. Moment buffers follow the store's
/// parameter order; the bias-correction step count lives in the ParamStore.
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}
    void step(ParamStore& store);
    const AdamWConfig& config() const { return cfg_; }

  private:
    AdamWConfig cfg_;
    std::vector<DenseGrid> m_, v_;
};

} // namespace scat
