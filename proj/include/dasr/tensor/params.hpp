#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dasr/core/rng.hpp"
#include "dasr/tensor/tape.hpp"
#include "dasr/tensor/tensor.hpp"

namespace dasr {

/// Named parameter tensors. std::map keeps iteration order sorted by name,
/// which fixes the serialization order of checkpoints.
struct ParamStore {
  std::map<std::string, Tensor> params;

  Tensor& at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ParamError("ParamStore: unknown parameter " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ParamError("ParamStore: unknown parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params.count(name) != 0; }

  /// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor& create(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return params.emplace(name, std::move(t)).first->second;
  }

  Tensor& create_zeros(const std::string& name, std::vector<int> shape) {
    return params.emplace(name, Tensor(std::move(shape))).first->second;
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
  }
};

/// Per-step binding of store parameters into a tape. Each parameter becomes
/// one leaf node per step; repeated lookups return the same node so shared
/// weights accumulate gradients correctly.
class BoundParams {
 public:
  BoundParams(Tape& tape, ParamStore& store, bool trainable)
      : tape_(tape), store_(store), trainable_(trainable) {}

  Tape::Id operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Tape::Id id = tape_.leaf(store_.at(name), trainable_);
    bound_.emplace(name, id);
    return id;
  }

  /// Gradients for every bound parameter after backward(); unreached
  /// parameters come back as zeros.
  std::map<std::string, Tensor> collect_grads() const {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, id] : bound_) grads.emplace(name, tape_.grad(id));
    return grads;
  }

  Tape& tape() { return tape_; }
  ParamStore& store() { return store_; }
  bool trainable() const { return trainable_; }

 private:
  Tape& tape_;
  ParamStore& store_;
  bool trainable_;
  std::map<std::string, Tape::Id> bound_;
};

}  // namespace dasr
