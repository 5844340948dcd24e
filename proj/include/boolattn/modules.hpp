#pragma once

#include <array>
#include <string>
#include <vector>

#include "boolattn/ops.hpp"
#include "boolattn/tensor.hpp"

namespace boolattn {

enum class OperatorKind : int { And = 0, Or = 1, Not = 2 };
inline constexpr int kNumOperators = 3;
const char* operator_name(OperatorKind op);

/// Named parameter registry used by the optimizer and checkpoints.
using ParamMap = std::vector<std::pair<std::string, Tensor>>;

/// One learnable embedding per Boolean operator plus a shared projection
/// into the model's hidden space.
struct OperatorEmbeddingTable {
  Tensor embeddings;  // [E, d_o]
  Tensor w_proj;      // [d_h, d_o]
  Tensor b_proj;      // [d_h]

  OperatorEmbeddingTable() = default;
  OperatorEmbeddingTable(int d_o, int d_h, Rng& rng);

  Tensor embedding(OperatorKind op) const;  // [d_o]
  Tensor project(OperatorKind op) const;    // [d_h]
  void register_params(const std::string& prefix, ParamMap& out);
};

/// Token-level cue probabilities for one operator, shared linear head over
/// hidden states shifted by the projected operator embedding.
struct CuePredictor {
  Tensor w;  // [d_h, 1]
  Tensor b;  // [1]

  CuePredictor() = default;
  explicit CuePredictor(int d_h);

  /// p_c[b,l] = sigma(w . (H[b,l] + o_proj) + b). H: [B,L,d_h], returns [B,L].
  Tensor predict(const Tensor& hidden, const Tensor& o_proj) const;
  void register_params(const std::string& prefix, ParamMap& out);
};

/// Indices with prob > threshold, per batch row, ascending.
std::vector<std::vector<int>> extract_positions(const Tensor& probs, float threshold = 0.5f);

struct ScopeResult {
  Tensor logits;  // [B,L]
  Tensor probs;   // [B,L]
  Tensor hard;    // [B,L], values {0,1} (or soft probs in soft mode)
  Tensor mutual;  // [B,heads,L,L], AND/OR only
  Tensor unary;   // [B,heads,L,1], NOT only
};

/// Conv1D over [H; p_c] with FiLM modulation from the operator embedding,
/// a per-token logit head, Gumbel-Sigmoid relaxation and STE thresholding.
struct ScopePredictor {
  Tensor conv_kernels;  // [C, d_h+1, k]
  Tensor conv_bias;     // [C]
  Tensor head_w;        // [C, 1]
  Tensor head_b;        // [1]
  Tensor w_gamma, b_gamma;  // [C,d_o], [C]
  Tensor w_beta, b_beta;    // [C,d_o], [C]
  std::array<Tensor, kNumOperators> theta;  // learnable thresholds, one per operator

  ScopePredictor() = default;
  ScopePredictor(int d_h, int d_o, int channels, int kernel, float theta_init, Rng& rng);

  /// FiLM-modulated conv logits, one per token. p_c joins H as an extra channel.
  Tensor scope_logits(const Tensor& hidden, const Tensor& cue_probs,
                      const Tensor& op_embedding) const;
  /// Training mode samples through Gumbel-Sigmoid; eval mode is a plain sigmoid.
  static Tensor scope_probs(const Tensor& logits, float temperature, Rng* rng, bool training);
  Tensor harden(const Tensor& probs, OperatorKind op) const;
  /// AND/OR: outer product broadcast over heads; NOT: unary column per head.
  static ScopeResult mutualize(const Tensor& hard, int heads, OperatorKind op);

  ScopeResult predict(const Tensor& hidden, const Tensor& cue_probs, const Tensor& op_embedding,
                      OperatorKind op, int heads, float temperature, bool training, Rng* rng,
                      bool soft) const;
  void register_params(const std::string& prefix, ParamMap& out);
};

/// Non-negative, operator-gated, position-aware bias magnitudes per token.
struct BiasPredictor {
  Tensor w1, b1;     // [d_h+1, hidden], [hidden]
  Tensor w2, b2;     // [hidden, 1], [1]
  Tensor w_op;       // [d_o]; scalar gate = sigma(w_op . e_op)
  Tensor log_sigma;  // Gaussian kernel spread, stored in log space

  BiasPredictor() = default;
  BiasPredictor(int d_h, int d_o, int hidden, float sigma_init, Rng& rng);

  /// Offsets to the nearest cue with operator-specific clipping. Rows with no
  /// cue yield all zeros (and a one-time warning).
  static std::vector<float> relative_positions(const std::vector<std::vector<int>>& cue_positions,
                                               int batch, int len, OperatorKind op, int window);
  Tensor gaussian_weight(const std::vector<float>& rel, int batch, int len) const;  // [B,L]
  Tensor bias_scores(const Tensor& hidden, const Tensor& weights) const;            // [B,L]
  Tensor gate_bias(const Tensor& raw, const Tensor& op_embedding) const;            // [B,L]

  Tensor compute(const Tensor& hidden, const std::vector<std::vector<int>>& cue_positions,
                 OperatorKind op, const Tensor& op_embedding, int window) const;
  void register_params(const std::string& prefix, ParamMap& out);
};

/// Multi-label operator presence classifier (sigmoid per operator, logits
/// scaled by a small temperature, hard values via STE at 0.5).
struct GateClassifier {
  Tensor w1, b1;  // [d_h, hidden], [hidden]
  Tensor w2, b2;  // [hidden, E], [E]
  float temperature = 0.1f;

  GateClassifier() = default;
  GateClassifier(int d_h, int hidden, float temperature, Rng& rng);

  Tensor probs(const Tensor& pooled) const;       // [B,E]
  static Tensor hard(const Tensor& probs);        // [B,E] in {0,1}, STE backward
  void register_params(const std::string& prefix, ParamMap& out);
};

/// Column j of x[B,E] as a [B] vector (gradient scatters back).
Tensor select_col(const Tensor& x, int col);

/// S_op = G_op * Scope_op * Bias_op. gate: [B]; bias: [B,L].
/// AND/OR apply the mutual mask with the key token's bias; NOT applies the
/// unary mask broadcast over the query axis.
Tensor operator_bias(const Tensor& gate, const ScopeResult& scope, const Tensor& bias,
                     OperatorKind op, int heads);

/// S_Boolean = S_and + S_or - S_not.
Tensor combine(const Tensor& s_and, const Tensor& s_or, const Tensor& s_not);

struct AttentionOutput {
  Tensor output;  // [B,heads,L,head_dim]
  Tensor probs;   // [B,heads,L,L] post-softmax weights
};

/// Softmax(QK^T/sqrt(d) + S_Boolean + key_padding)V. s_boolean may be
/// undefined (plain attention). key_padding holds 0 at valid keys and a large
/// negative value at padding, length B*L.
AttentionOutput attend(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& s_boolean,
                       const std::vector<float>& key_padding);

// Shared initializers.
Tensor xavier_uniform(int fan_in, int fan_out, Shape shape, Rng& rng);

}  // namespace boolattn
