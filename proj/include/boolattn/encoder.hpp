#pragma once

#include <array>
#include <vector>

#include "boolattn/modules.hpp"

namespace boolattn {

struct EncoderConfig {
  int vocab_size = 0;
  int d_h = 64;
  int layers = 2;
  int heads = 4;
  int head_dim = 16;
  int max_len = 64;
  int d_ffn = 128;
  int d_o = 10;
  int conv_kernel = 3;
  int conv_channels = 16;
  int bias_hidden = 32;
  int gate_hidden = 64;
  int window = 5;
  float gumbel_temperature = 1.0f;
  float gate_temperature = 0.1f;
  float theta_init = 0.5f;
  float sigma_init = 2.0f;
  bool use_boolattn = true;  // false builds a plain attention encoder

  void validate() const;
};

enum class GateMode { Oracle, Learned, Off };

struct EncodeOptions {
  GateMode gate_mode = GateMode::Oracle;
  /// Row-major [B x E] {0,1} labels; required in Oracle mode.
  const std::vector<float>* oracle_gates = nullptr;
  bool training = false;
  Rng* rng = nullptr;
  /// Bypass hard thresholding (scope masks and learned gates stay soft).
  /// Used by gradient diagnostics only.
  bool soft = false;
};

struct EncodedSequence {
  Tensor hidden;  // [B,L,d_h]
  Tensor pooled;  // [B,d_h] mean over non-padding positions
  std::array<Tensor, kNumOperators> cue_probs;  // layer-1 cue maps, [B,L]
  std::array<std::vector<std::vector<int>>, kNumOperators> cue_positions;
  Tensor gate_probs;  // [B,E] learned gate probabilities (boolattn encoders only)
};

struct EncoderLayer {
  Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_out, b_out;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  ScopePredictor scope;
  BiasPredictor bias;
};

/// Small pre-norm transformer encoder whose self-attention layers carry the
/// Boolean bias machinery. Cue prediction runs on the first layer's input and
/// is reused by every layer.
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig config, Rng& rng);

  EncodedSequence encode(const std::vector<int>& tokens, int batch, int len,
                         const std::vector<float>& pad_mask, const EncodeOptions& options) const;

  void register_params(ParamMap& out) const;
  std::int64_t base_param_count() const;
  std::int64_t boolattn_param_count() const;

  EncoderConfig config;
  Tensor token_emb;  // [V,d_h]
  Tensor pos_emb;    // [max_len,d_h]
  Tensor ln_f_g, ln_f_b;
  std::vector<EncoderLayer> layers;
  OperatorEmbeddingTable operators;
  CuePredictor cue;
  GateClassifier gate;
};

/// Dot product of two pooled vectors (plain float math, no graph).
double similarity(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace boolattn
