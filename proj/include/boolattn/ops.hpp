#pragma once

#include "boolattn/tensor.hpp"

namespace boolattn {

// Elementwise arithmetic. The right operand may be a scalar or have a shape
// that is a suffix of the left operand's shape (broadcast over leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, float c);
Tensor add_scalar(const Tensor& x, float c);

Tensor relu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sqrt_t(const Tensor& x);
/// Clamp to [lo, hi]; gradient passes through only where x is strictly inside.
Tensor clamp(const Tensor& x, float lo, float hi);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
/// Sum over the last axis: [..., n] -> [...].
Tensor sum_lastdim(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_lastdim(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& x);
/// [B, L, heads*hd] -> [B, heads, L, hd] and its inverse.
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);
/// Selects one row of a 2-D table (gradient scatters back).
Tensor select_row(const Tensor& table, int row);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, int batch, int len);

// Matrix product. Supports [m,k]x[k,n]; batched [*,m,k]x[*,k,n] with equal
// leading dims; and [*,m,k]x[k,n] with a shared right operand.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Cross-correlation along the sequence axis, zero-padded so the output
/// length equals the input length. x: [B,L,C_in], kernels: [C_out,C_in,k]
/// with k odd, bias: [C_out]. Returns [B,L,C_out].
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias);

Tensor softmax_lastdim(const Tensor& x);

/// sigma((logits + g1 - g2)/temperature) with g1,g2 ~ Gumbel(0,1) treated as
/// constants by the gradient.
Tensor gumbel_sigmoid(const Tensor& logits, float temperature, Rng& rng);

/// Forward I(p > theta) in {0,1}. Straight-through backward: p receives the
/// upstream gradient unchanged; theta receives the gradient of the surrogate
/// sigma((p - theta)/0.1) summed over elements.
Tensor ste_threshold(const Tensor& p, const Tensor& theta);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

/// Mean over non-masked positions. x: [B,L,d], mask: length B*L with 1 at
/// valid positions. Returns [B,d].
Tensor mean_pool(const Tensor& x, const std::vector<float>& mask);

/// out[b,i,j] = v[b,j]; broadcasts a per-token vector over the query axis.
Tensor broadcast_over_queries(const Tensor& v, int len);
/// Outer product per batch row: out[b,i,j] = h[b,i]*h[b,j].
Tensor outer_pair(const Tensor& h);
/// [B,L,L] -> [B,heads,L,L] (gradient sums over heads).
Tensor broadcast_heads(const Tensor& x, int heads);
/// Scales each batch row of x by g[b]. x: [B,...], g: [B].
Tensor row_scale(const Tensor& x, const Tensor& g);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
/// Targets are constants.
Tensor bce_mean(const Tensor& p, const std::vector<float>& targets);

/// Softmax cross-entropy per row with the true class in column 0, averaged
/// over rows. scores: [B,K].
Tensor cross_entropy_first(const Tensor& scores);

/// Central-difference derivative of f at param element i, h = 1e-3.
double finite_difference(const Tensor& param, std::int64_t index,
                         const std::function<double()>& eval, double h = 1e-3);

}  // namespace boolattn
