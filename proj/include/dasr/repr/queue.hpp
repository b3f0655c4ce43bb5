#pragma once

#include <deque>
#include <vector>

#include "dasr/core/error.hpp"
#include "dasr/tensor/tensor.hpp"

namespace dasr {

/// FIFO dictionary of projected keys used as contrastive negatives. Pushing
/// past capacity evicts the oldest entries.
class NegativeQueue {
 public:
  NegativeQueue() = default;
  NegativeQueue(int capacity, int dim) : capacity_(capacity), dim_(dim) {
    if (capacity < 1 || dim < 1) throw ParamError("NegativeQueue: capacity and dim must be >= 1");
  }

  void push(const Tensor& keys) {
    if (keys.rank() != 2 || keys.dim(1) != dim_)
      throw DimensionError("NegativeQueue: keys must be [B," + std::to_string(dim_) + "]");
    for (int i = 0; i < keys.dim(0); ++i) {
      entries_.emplace_back(keys.data.begin() + static_cast<size_t>(i) * dim_,
                            keys.data.begin() + static_cast<size_t>(i + 1) * dim_);
      if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
    }
  }

  int count() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  bool empty() const { return entries_.empty(); }

  /// Entries as rows, oldest first: [count, dim].
  Tensor as_matrix() const {
    if (entries_.empty()) throw DimensionError("NegativeQueue: empty");
    Tensor m({count(), dim_});
    int64_t i = 0;
    for (const auto& e : entries_)
      for (double v : e) m[i++] = v;
    return m;
  }

  /// Transposed layout [dim, count] for use as the right factor of a matmul.
  Tensor as_matrix_transposed() const {
    if (entries_.empty()) throw DimensionError("NegativeQueue: empty");
    const int n = count();
    Tensor m({dim_, n});
    int col = 0;
    for (const auto& e : entries_) {
      for (int d = 0; d < dim_; ++d) m[static_cast<int64_t>(d) * n + col] = e[d];
      ++col;
    }
    return m;
  }

  const std::deque<std::vector<double>>& entries() const { return entries_; }

  void restore(int capacity, int dim, std::deque<std::vector<double>> entries) {
    capacity_ = capacity;
    dim_ = dim;
    entries_ = std::move(entries);
  }

 private:
  int capacity_ = 0;
  int dim_ = 0;
  std::deque<std::vector<double>> entries_;
};

}  // namespace dasr
