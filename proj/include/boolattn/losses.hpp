#pragma once

#include "boolattn/ops.hpp"

namespace boolattn {

/// Mean BCE over token positions. p: [B,L], targets in {0,1}.
Tensor cue_loss(const Tensor& p, const std::vector<float>& targets);

/// Mean BCE over operator slots. p: [B,E], targets in {0,1}.
Tensor gate_loss(const Tensor& p, const std::vector<float>& targets);

/// mean over batch of max(0, d(a,p) - d(a,n) + margin), Euclidean distance.
/// anchor/positive/negative: [B,d].
Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                    float margin);

/// L_cue + L_gate + alpha * L_triplet.
Tensor pretrain_objective(const Tensor& l_cue, const Tensor& l_gate, const Tensor& l_triplet,
                          float alpha);

/// -ln( exp(q.p) / (exp(q.p) + sum_i exp(q.n_i)) ) averaged over the batch.
/// q, pos: [B,d]; negs: [B,K,d].
Tensor contrastive_loss(const Tensor& q, const Tensor& pos, const Tensor& negs);

}  // namespace boolattn
