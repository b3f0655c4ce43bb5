#pragma once

#include <vector>

#include "dasr/repr/queue.hpp"
#include "dasr/tensor/params.hpp"
#include "dasr/tensor/tape.hpp"

namespace dasr {

/// InfoNCE over one positive and the queued negatives, averaged over the
/// batch. Logit row i is [q_i.k_i, q_i.n_1, ..., q_i.n_N] / tau with target
/// index 0, so the positive similarity appears in the denominator and the
/// loss is bounded below by zero. While the queue is still empty the keys of
/// the other pairs serve as negatives instead.
inline Tape::Id infonce_batch_loss(Tape& tape, Tape::Id queries, Tape::Id keys,
                                   const NegativeQueue& queue, double tau) {
  if (tau <= 0.0) throw ParamError("infonce_batch_loss: tau must be > 0");
  const Tensor& q = tape.val(queries);
  const Tensor& k = tape.val(keys);
  check_same_shape(q, k, "infonce_batch_loss");
  if (q.rank() != 2) throw DimensionError("infonce_batch_loss: need [B,P]");
  const int b = q.dim(0);
  if (!queue.empty()) {
    const Tape::Id pos = tape.rowwise_dot(queries, keys);                   // [B,1]
    const Tape::Id negs = tape.matmul(queries, tape.constant(queue.as_matrix_transposed()));
    const Tape::Id logits = tape.scale(tape.concat_cols(pos, negs), 1.0 / tau);
    return tape.softmax_cross_entropy(logits, std::vector<int>(b, 0));
  }
  if (b < 2)
    throw DimensionError("infonce_batch_loss: empty queue needs a batch of at least 2 pairs");
  // In-batch fallback: row i of q against every key; the diagonal is the
  // positive.
  Tensor kt({k.dim(1), b});
  for (int i = 0; i < b; ++i)
    for (int d = 0; d < k.dim(1); ++d) kt[static_cast<int64_t>(d) * b + i] = k.at2(i, d);
  const Tape::Id logits = tape.scale(tape.matmul(queries, tape.constant(std::move(kt))), 1.0 / tau);
  std::vector<int> targets(b);
  for (int i = 0; i < b; ++i) targets[i] = i;
  return tape.softmax_cross_entropy(logits, std::move(targets));
}

/// key <- m*key + (1-m)*query, parameterwise. The key encoder never receives
/// gradients; this convex blend is its only update.
inline void momentum_update(ParamStore& key_params, const ParamStore& query_params, double m) {
  if (m < 0.0 || m >= 1.0) throw ParamError("momentum_update: m must lie in [0,1)");
  if (key_params.params.size() != query_params.params.size())
    throw DimensionError("momentum_update: parameter sets differ");
  auto kit = key_params.params.begin();
  auto qit = query_params.params.begin();
  for (; kit != key_params.params.end(); ++kit, ++qit) {
    if (kit->first != qit->first)
      throw DimensionError("momentum_update: parameter name mismatch at " + kit->first);
    check_same_shape(kit->second, qit->second, "momentum_update");
    Tensor& k = kit->second;
    const Tensor& q = qit->second;
    for (int64_t i = 0; i < k.numel(); ++i) k[i] = m * k[i] + (1.0 - m) * q[i];
  }
}

}  // namespace dasr
