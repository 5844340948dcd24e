#include "boolattn/modules.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <stdexcept>

namespace boolattn {

const char* operator_name(OperatorKind op) {
  switch (op) {
    case OperatorKind::And: return "and";
    case OperatorKind::Or: return "or";
    case OperatorKind::Not: return "not";
  }
  return "?";
}

Tensor xavier_uniform(int fan_in, int fan_out, Shape shape, Rng& rng) {
  float bound = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

OperatorEmbeddingTable::OperatorEmbeddingTable(int d_o, int d_h, Rng& rng) {
  embeddings = Tensor::uniform({kNumOperators, d_o}, -0.1f, 0.1f, rng, true);
  w_proj = Tensor::uniform({d_h, d_o}, -0.1f, 0.1f, rng, true);
  b_proj = Tensor::uniform({d_h}, -0.1f, 0.1f, rng, true);
}

Tensor OperatorEmbeddingTable::embedding(OperatorKind op) const {
  return select_row(embeddings, static_cast<int>(op));
}

Tensor OperatorEmbeddingTable::project(OperatorKind op) const {
  Tensor o = embedding(op);
  Tensor col = matmul(w_proj, reshape(o, {o.dim(0), 1}));  // [d_h,1]
  return add(reshape(col, {w_proj.dim(0)}), b_proj);
}

void OperatorEmbeddingTable::register_params(const std::string& prefix, ParamMap& out) {
  out.emplace_back(prefix + ".embeddings", embeddings);
  out.emplace_back(prefix + ".w_proj", w_proj);
  out.emplace_back(prefix + ".b_proj", b_proj);
}

CuePredictor::CuePredictor(int d_h) {
  w = Tensor::zeros({d_h, 1}, true);
  b = Tensor::zeros({1}, true);
}

Tensor CuePredictor::predict(const Tensor& hidden, const Tensor& o_proj) const {
  if (hidden.shape().back() != w.dim(0))
    throw std::invalid_argument("cue predictor: hidden size " + shape_str(hidden.shape()) +
                                " does not match weight " + shape_str(w.shape()));
  Tensor shifted = add(hidden, o_proj);                 // [B,L,d_h]
  Tensor logits = matmul(shifted, w);                   // [B,L,1]
  logits = add(logits, b);
  return sigmoid(reshape(logits, {hidden.dim(0), hidden.dim(1)}));
}

void CuePredictor::register_params(const std::string& prefix, ParamMap& out) {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

std::vector<std::vector<int>> extract_positions(const Tensor& probs, float threshold) {
  int B = probs.dim(0), L = probs.dim(1);
  std::vector<std::vector<int>> result(B);
  for (int b = 0; b < B; ++b)
    for (int l = 0; l < L; ++l)
      if (probs.data()[b * L + l] > threshold) result[b].push_back(l);
  return result;
}

ScopePredictor::ScopePredictor(int d_h, int d_o, int channels, int kernel, float theta_init,
                               Rng& rng) {
  int c_in = d_h + 1;
  conv_kernels = xavier_uniform(c_in * kernel, channels, {channels, c_in, kernel}, rng);
  conv_bias = Tensor::zeros({channels}, true);
  head_w = Tensor::zeros({channels, 1}, true);
  head_b = Tensor::zeros({1}, true);
  w_gamma = Tensor::zeros({channels, d_o}, true);
  b_gamma = Tensor::full({channels}, 1.0f, true);  // FiLM starts as identity
  w_beta = Tensor::zeros({channels, d_o}, true);
  b_beta = Tensor::zeros({channels}, true);
  for (int k = 0; k < kNumOperators; ++k) theta[k] = Tensor::scalar(theta_init, true);
}

Tensor ScopePredictor::scope_logits(const Tensor& hidden, const Tensor& cue_probs,
                                    const Tensor& op_embedding) const {
  int B = hidden.dim(0), L = hidden.dim(1);
  Tensor input = concat_lastdim(hidden, reshape(cue_probs, {B, L, 1}));
  Tensor conv = conv1d(input, conv_kernels, conv_bias);  // [B,L,C]
  Tensor o_col = reshape(op_embedding, {op_embedding.dim(0), 1});
  Tensor gamma = add(reshape(matmul(w_gamma, o_col), {b_gamma.dim(0)}), b_gamma);  // [C]
  Tensor beta = add(reshape(matmul(w_beta, o_col), {b_beta.dim(0)}), b_beta);      // [C]
  Tensor film = add(mul(conv, gamma), beta);
  Tensor logits = add(matmul(film, head_w), head_b);  // [B,L,1]
  return reshape(logits, {B, L});
}

Tensor ScopePredictor::scope_probs(const Tensor& logits, float temperature, Rng* rng,
                                   bool training) {
  if (training) {
    if (!rng) throw std::invalid_argument("scope_probs: training mode needs an rng");
    return gumbel_sigmoid(logits, temperature, *rng);
  }
  return sigmoid(logits);
}

Tensor ScopePredictor::harden(const Tensor& probs, OperatorKind op) const {
  return ste_threshold(probs, theta[static_cast<int>(op)]);
}

ScopeResult ScopePredictor::mutualize(const Tensor& hard, int heads, OperatorKind op) {
  ScopeResult r;
  r.hard = hard;
  if (op == OperatorKind::Not) {
    int B = hard.dim(0), L = hard.dim(1);
    r.unary = broadcast_heads(reshape(hard, {B, L, 1}), heads);  // [B,heads,L,1]
  } else {
    r.mutual = broadcast_heads(outer_pair(hard), heads);  // [B,heads,L,L]
  }
  return r;
}

ScopeResult ScopePredictor::predict(const Tensor& hidden, const Tensor& cue_probs,
                                    const Tensor& op_embedding, OperatorKind op, int heads,
                                    float temperature, bool training, Rng* rng, bool soft) const {
  Tensor logits = scope_logits(hidden, cue_probs, op_embedding);
  Tensor probs = scope_probs(logits, temperature, rng, training);
  Tensor hard = soft ? probs : harden(probs, op);
  ScopeResult r = mutualize(hard, heads, op);
  r.logits = logits;
  r.probs = probs;
  return r;
}

void ScopePredictor::register_params(const std::string& prefix, ParamMap& out) {
  out.emplace_back(prefix + ".conv_kernels", conv_kernels);
  out.emplace_back(prefix + ".conv_bias", conv_bias);
  out.emplace_back(prefix + ".head_w", head_w);
  out.emplace_back(prefix + ".head_b", head_b);
  out.emplace_back(prefix + ".w_gamma", w_gamma);
  out.emplace_back(prefix + ".b_gamma", b_gamma);
  out.emplace_back(prefix + ".w_beta", w_beta);
  out.emplace_back(prefix + ".b_beta", b_beta);
  for (int k = 0; k < kNumOperators; ++k)
    out.emplace_back(prefix + ".theta_" + operator_name(static_cast<OperatorKind>(k)), theta[k]);
}

BiasPredictor::BiasPredictor(int d_h, int d_o, int hidden, float sigma_init, Rng& rng) {
  w1 = xavier_uniform(d_h + 1, hidden, {d_h + 1, hidden}, rng);
  b1 = Tensor::zeros({hidden}, true);
  w2 = Tensor::zeros({hidden, 1}, true);
  b2 = Tensor::zeros({1}, true);
  w_op = Tensor::zeros({d_o}, true);
  log_sigma = Tensor::scalar(std::log(sigma_init), true);
}

namespace {
std::atomic<bool> g_warned_no_cue{false};
}

std::vector<float> BiasPredictor::relative_positions(
    const std::vector<std::vector<int>>& cue_positions, int batch, int len, OperatorKind op,
    int window) {
  std::vector<float> rel(static_cast<size_t>(batch) * len, 0.0f);
  for (int b = 0; b < batch; ++b) {
    const auto& cues = cue_positions[b];
    if (cues.empty()) {
      if (!g_warned_no_cue.exchange(true))
        std::cerr << "warning: no cue position for operator '" << operator_name(op)
                  << "' in an active row; relative positions default to 0\n";
      continue;
    }
    for (int i = 0; i < len; ++i) {
      // Offset to the nearest cue of this operator.
      int best = i - cues[0];
      for (int c : cues)
        if (std::abs(i - c) < std::abs(best)) best = i - c;
      int r;
      if (op == OperatorKind::Not) {
        r = std::max(0, best);
      } else {
        r = std::min(std::max(best, -window), window);
      }
      rel[static_cast<size_t>(b) * len + i] = static_cast<float>(r);
    }
  }
  return rel;
}

Tensor BiasPredictor::gaussian_weight(const std::vector<float>& rel, int batch, int len) const {
  if (static_cast<int>(rel.size()) != batch * len)
    throw std::invalid_argument("gaussian_weight: offset length mismatch");
  float sigma = std::exp(log_sigma.data()[0]);
  std::vector<float> out(rel.size());
  for (size_t i = 0; i < rel.size(); ++i)
    out[i] = std::exp(-rel[i] * rel[i] / (2.0f * sigma * sigma));
  Tensor ls = log_sigma;
  return make_op({batch, len}, std::move(out), {ls}, [ls, rel, sigma](TensorImpl& r) mutable {
    if (!ls.requires_grad()) return;
    // w = exp(-r^2 / (2 sigma^2)), sigma = exp(log_sigma)
    // dw/dlog_sigma = w * r^2 / sigma^2
    double acc = 0.0;
    for (size_t i = 0; i < rel.size(); ++i)
      acc += static_cast<double>(r.grad[i]) * r.data[i] * rel[i] * rel[i] / (sigma * sigma);
    ls.grad()[0] += static_cast<float>(acc);
  });
}

Tensor BiasPredictor::bias_scores(const Tensor& hidden, const Tensor& weights) const {
  int B = hidden.dim(0), L = hidden.dim(1);
  Tensor input = concat_lastdim(hidden, reshape(weights, {B, L, 1}));  // [B,L,d_h+1]
  Tensor h = relu(add(matmul(input, w1), b1));
  Tensor out = add(matmul(h, w2), b2);  // [B,L,1]
  return reshape(out, {B, L});
}

Tensor BiasPredictor::gate_bias(const Tensor& raw, const Tensor& op_embedding) const {
  int d_o = op_embedding.dim(0);
  Tensor dot = matmul(reshape(w_op, {1, d_o}), reshape(op_embedding, {d_o, 1}));  // [1,1]
  Tensor gate = sigmoid(reshape(dot, {1}));
  return softplus(mul(raw, gate));
}

Tensor BiasPredictor::compute(const Tensor& hidden, const std::vector<std::vector<int>>& cue_positions,
                              OperatorKind op, const Tensor& op_embedding, int window) const {
  int B = hidden.dim(0), L = hidden.dim(1);
  std::vector<float> rel = relative_positions(cue_positions, B, L, op, window);
  Tensor w = gaussian_weight(rel, B, L);
  Tensor raw = bias_scores(hidden, w);
  return gate_bias(raw, op_embedding);
}

void BiasPredictor::register_params(const std::string& prefix, ParamMap& out) {
  out.emplace_back(prefix + ".w1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".w2", w2);
  out.emplace_back(prefix + ".b2", b2);
  out.emplace_back(prefix + ".w_op", w_op);
  out.emplace_back(prefix + ".log_sigma", log_sigma);
}

GateClassifier::GateClassifier(int d_h, int hidden, float temperature, Rng& rng)
    : temperature(temperature) {
  w1 = xavier_uniform(d_h, hidden, {d_h, hidden}, rng);
  // ReLU gain: double the Xavier bound so half-rectified features keep
  // enough variance for the low-rate gate objective to separate classes.
  for (auto& v : w1.data()) v *= 2.0f;
  b1 = Tensor::zeros({hidden}, true);
  w2 = Tensor::zeros({hidden, kNumOperators}, true);
  b2 = Tensor::zeros({kNumOperators}, true);
}

Tensor GateClassifier::probs(const Tensor& pooled) const {
  Tensor h = relu(add(matmul(pooled, w1), b1));
  Tensor logits = add(matmul(h, w2), b2);
  return sigmoid(scale(logits, 1.0f / temperature));
}

Tensor GateClassifier::hard(const Tensor& probs) {
  return ste_threshold(probs, Tensor::scalar(0.5f));
}

void GateClassifier::register_params(const std::string& prefix, ParamMap& out) {
  out.emplace_back(prefix + ".w1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".w2", w2);
  out.emplace_back(prefix + ".b2", b2);
}

Tensor select_col(const Tensor& x, int col) {
  if (x.ndim() != 2) throw std::invalid_argument("select_col expects [B,E]");
  int B = x.dim(0), E = x.dim(1);
  std::vector<float> out(B);
  for (int b = 0; b < B; ++b) out[b] = x.data()[b * E + col];
  return make_op({B}, std::move(out), {x}, [x, B, E, col](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (int b = 0; b < B; ++b) x.grad()[b * E + col] += r.grad[b];
  });
}

Tensor operator_bias(const Tensor& gate, const ScopeResult& scope, const Tensor& bias,
                     OperatorKind op, int heads) {
  int B = bias.dim(0), L = bias.dim(1);
  if (op == OperatorKind::Not) {
    if (!scope.unary.defined())
      throw std::invalid_argument("operator_bias: missing unary mask for 'not'");
    // unary[b,j] * bias[b,j], broadcast over the query axis.
    Tensor masked = mul(scope.hard, bias);  // [B,L]
    Tensor mat = broadcast_heads(broadcast_over_queries(masked, L), heads);
    return row_scale(mat, gate);
  }
  if (!scope.mutual.defined())
    throw std::invalid_argument(std::string("operator_bias: missing mutual mask for '") +
                                operator_name(op) + "'");
  Tensor key_bias = broadcast_heads(broadcast_over_queries(bias, L), heads);  // bias of key j
  Tensor mat = mul(scope.mutual, key_bias);
  return row_scale(mat, gate);
}

Tensor combine(const Tensor& s_and, const Tensor& s_or, const Tensor& s_not) {
  if (s_and.shape() != s_or.shape() || s_and.shape() != s_not.shape())
    throw std::invalid_argument("combine: shape mismatch " + shape_str(s_and.shape()) + " / " +
                                shape_str(s_or.shape()) + " / " + shape_str(s_not.shape()));
  return sub(add(s_and, s_or), s_not);
}

AttentionOutput attend(const Tensor& q, const Tensor& k, const Tensor& v,
                       const Tensor& s_boolean, const std::vector<float>& key_padding) {
  int B = q.dim(0), heads = q.dim(1), L = q.dim(2), hd = q.dim(3);
  Tensor scores = scale(matmul(q, transpose_last2(k)), 1.0f / std::sqrt(static_cast<float>(hd)));
  if (s_boolean.defined()) scores = add(scores, s_boolean);
  if (!key_padding.empty()) {
    std::vector<float> mask(static_cast<std::int64_t>(B) * heads * L * L, 0.0f);
    for (int b = 0; b < B; ++b)
      for (int j = 0; j < L; ++j)
        if (key_padding[b * L + j] == 0.0f)
          for (int h = 0; h < heads; ++h)
            for (int i = 0; i < L; ++i)
              mask[((static_cast<std::int64_t>(b) * heads + h) * L + i) * L + j] = -1e9f;
    scores = add(scores, Tensor({B, heads, L, L}, std::move(mask)));
  }
  AttentionOutput out;
  out.probs = softmax_lastdim(scores);
  out.output = matmul(out.probs, v);
  return out;
}

}  // namespace boolattn
