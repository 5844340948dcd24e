#include "boolattn/losses.hpp"

#include <stdexcept>

namespace boolattn {

Tensor cue_loss(const Tensor& p, const std::vector<float>& targets) {
  return bce_mean(p, targets);
}

Tensor gate_loss(const Tensor& p, const std::vector<float>& targets) {
  return bce_mean(p, targets);
}

namespace {
Tensor euclidean_rows(const Tensor& a, const Tensor& b) {
  Tensor diff = sub(a, b);
  return sqrt_t(sum_lastdim(mul(diff, diff)));  // [B]
}
}  // namespace

Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                    float margin) {
  if (margin <= 0.0f) throw std::invalid_argument("triplet_loss: margin must be positive");
  Tensor d_ap = euclidean_rows(anchor, positive);
  Tensor d_an = euclidean_rows(anchor, negative);
  return mean_all(relu(add_scalar(sub(d_ap, d_an), margin)));
}

Tensor pretrain_objective(const Tensor& l_cue, const Tensor& l_gate, const Tensor& l_triplet,
                          float alpha) {
  return add(add(l_cue, l_gate), scale(l_triplet, alpha));
}

Tensor contrastive_loss(const Tensor& q, const Tensor& pos, const Tensor& negs) {
  int B = q.dim(0), d = q.dim(1);
  if (negs.ndim() != 3 || negs.dim(0) != B || negs.dim(2) != d)
    throw std::invalid_argument("contrastive_loss: negs must be [B,K,d]");
  Tensor pos_score = reshape(sum_lastdim(mul(q, pos)), {B, 1});
  Tensor neg_scores =
      reshape(matmul(reshape(q, {B, 1, d}), transpose_last2(negs)), {B, negs.dim(1)});
  Tensor scores = concat_lastdim(pos_score, neg_scores);  // positive in column 0
  return cross_entropy_first(scores);
}

}  // namespace boolattn
