#include "boolattn/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace boolattn {

void EncoderConfig::validate() const {
  if (d_h != heads * head_dim)
    throw std::invalid_argument("encoder config: d_h must equal heads*head_dim");
  if (vocab_size <= 0) throw std::invalid_argument("encoder config: vocab_size not set");
  if (conv_kernel % 2 == 0) throw std::invalid_argument("encoder config: conv_kernel must be odd");
}

Encoder::Encoder(EncoderConfig cfg, Rng& rng) : config(cfg) {
  config.validate();
  // Mutually orthogonal token embeddings (Gram-Schmidt over Gaussian rows,
  // restarted every d_h rows). Keeps unrelated tokens out of each other's
  // way in the cue and gate heads, which only move a little during the
  // low-rate pretraining pass.
  token_emb = Tensor::normal({config.vocab_size, config.d_h}, 0.0f, 1.0f, rng, true);
  {
    const int V = config.vocab_size, d = config.d_h;
    auto& e = token_emb.data();
    const double target_norm = 10.0 * std::sqrt(static_cast<double>(d));
    for (int v = 0; v < V; ++v) {
      for (int u = (v / d) * d; u < v; ++u) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += double(e[v * d + j]) * e[u * d + j];
        double nsq = 0.0;
        for (int j = 0; j < d; ++j) nsq += double(e[u * d + j]) * e[u * d + j];
        for (int j = 0; j < d; ++j) e[v * d + j] -= float(dot / nsq * e[u * d + j]);
      }
      double nsq = 0.0;
      for (int j = 0; j < d; ++j) nsq += double(e[v * d + j]) * e[v * d + j];
      double s = target_norm / std::sqrt(std::max(nsq, 1e-12));
      for (int j = 0; j < d; ++j) e[v * d + j] = float(e[v * d + j] * s);
    }
  }
  pos_emb = Tensor::normal({config.max_len, config.d_h}, 0.0f, 0.02f, rng, true);
  ln_f_g = Tensor::full({config.d_h}, 1.0f, true);
  ln_f_b = Tensor::zeros({config.d_h}, true);
  layers.resize(config.layers);
  for (auto& layer : layers) {
    int d = config.d_h;
    layer.w_q = xavier_uniform(d, d, {d, d}, rng);
    layer.b_q = Tensor::zeros({d}, true);
    layer.w_k = xavier_uniform(d, d, {d, d}, rng);
    layer.b_k = Tensor::zeros({d}, true);
    layer.w_v = xavier_uniform(d, d, {d, d}, rng);
    layer.b_v = Tensor::zeros({d}, true);
    layer.w_out = xavier_uniform(d, d, {d, d}, rng);
    layer.b_out = Tensor::zeros({d}, true);
    layer.ln1_g = Tensor::full({d}, 1.0f, true);
    layer.ln1_b = Tensor::zeros({d}, true);
    layer.ln2_g = Tensor::full({d}, 1.0f, true);
    layer.ln2_b = Tensor::zeros({d}, true);
    layer.ffn_w1 = xavier_uniform(d, config.d_ffn, {d, config.d_ffn}, rng);
    layer.ffn_b1 = Tensor::zeros({config.d_ffn}, true);
    layer.ffn_w2 = xavier_uniform(config.d_ffn, d, {config.d_ffn, d}, rng);
    layer.ffn_b2 = Tensor::zeros({d}, true);
    if (config.use_boolattn) {
      layer.scope = ScopePredictor(d, config.d_o, config.conv_channels, config.conv_kernel,
                                   config.theta_init, rng);
      layer.bias = BiasPredictor(d, config.d_o, config.bias_hidden, config.sigma_init, rng);
    }
  }
  if (config.use_boolattn) {
    operators = OperatorEmbeddingTable(config.d_o, config.d_h, rng);
    cue = CuePredictor(config.d_h);
    gate = GateClassifier(config.d_h, config.gate_hidden, config.gate_temperature, rng);
  }
}

EncodedSequence Encoder::encode(const std::vector<int>& tokens, int batch, int len,
                                const std::vector<float>& pad_mask,
                                const EncodeOptions& options) const {
  if (len > config.max_len)
    throw std::invalid_argument("sequence length " + std::to_string(len) + " exceeds max_len " +
                                std::to_string(config.max_len));
  if (static_cast<int>(tokens.size()) != batch * len)
    throw std::invalid_argument("encode: token buffer size mismatch");

  EncodedSequence result;
  Tensor tok = embedding_lookup(token_emb, tokens, batch, len);
  std::vector<int> pos_ids(static_cast<size_t>(batch) * len);
  for (int b = 0; b < batch; ++b)
    for (int l = 0; l < len; ++l) pos_ids[static_cast<size_t>(b) * len + l] = l;
  Tensor h = add(tok, embedding_lookup(pos_emb, pos_ids, batch, len));

  bool use_bool = config.use_boolattn && options.gate_mode != GateMode::Off;

  std::array<Tensor, kNumOperators> op_proj;
  std::array<Tensor, kNumOperators> op_emb;
  std::array<Tensor, kNumOperators> gates;
  if (config.use_boolattn) {
    for (int k = 0; k < kNumOperators; ++k) {
      auto opk = static_cast<OperatorKind>(k);
      op_emb[k] = operators.embedding(opk);
      op_proj[k] = operators.project(opk);
      result.cue_probs[k] = cue.predict(h, op_proj[k]);
      result.cue_positions[k] = extract_positions(result.cue_probs[k]);
    }
    Tensor pooled0 = mean_pool(h, pad_mask);
    result.gate_probs = gate.probs(pooled0);
  }
  if (use_bool) {
    if (options.gate_mode == GateMode::Oracle) {
      if (!options.oracle_gates)
        throw std::invalid_argument("encode: oracle gate mode requires gate labels");
      for (int k = 0; k < kNumOperators; ++k) {
        std::vector<float> g(batch);
        for (int b = 0; b < batch; ++b) g[b] = (*options.oracle_gates)[b * kNumOperators + k];
        gates[k] = Tensor({batch}, std::move(g));
      }
    } else {
      Tensor hard =
          options.soft ? result.gate_probs : GateClassifier::hard(result.gate_probs);
      for (int k = 0; k < kNumOperators; ++k) gates[k] = select_col(hard, k);
    }
  }

  for (const auto& layer : layers) {
    Tensor a = layer_norm(h, layer.ln1_g, layer.ln1_b);
    Tensor s_boolean;  // undefined -> plain attention
    if (use_bool) {
      std::array<Tensor, kNumOperators> s_op;
      for (int k = 0; k < kNumOperators; ++k) {
        auto opk = static_cast<OperatorKind>(k);
        ScopeResult scope =
            layer.scope.predict(a, result.cue_probs[k], op_emb[k], opk, config.heads,
                                config.gumbel_temperature, options.training, options.rng,
                                options.soft);
        Tensor bias_vec =
            layer.bias.compute(a, result.cue_positions[k], opk, op_emb[k], config.window);
        s_op[k] = operator_bias(gates[k], scope, bias_vec, opk, config.heads);
      }
      s_boolean = combine(s_op[0], s_op[1], s_op[2]);
    }
    Tensor q = split_heads(add(matmul(a, layer.w_q), layer.b_q), config.heads);
    Tensor k = split_heads(add(matmul(a, layer.w_k), layer.b_k), config.heads);
    Tensor v = split_heads(add(matmul(a, layer.w_v), layer.b_v), config.heads);
    AttentionOutput att = attend(q, k, v, s_boolean, pad_mask);
    Tensor attn_out = add(matmul(merge_heads(att.output), layer.w_out), layer.b_out);
    h = add(h, attn_out);

    Tensor f = layer_norm(h, layer.ln2_g, layer.ln2_b);
    Tensor ffn = add(matmul(relu(add(matmul(f, layer.ffn_w1), layer.ffn_b1)), layer.ffn_w2),
                     layer.ffn_b2);
    h = add(h, ffn);
  }

  result.hidden = layer_norm(h, ln_f_g, ln_f_b);
  result.pooled = mean_pool(result.hidden, pad_mask);
  return result;
}

void Encoder::register_params(ParamMap& out) const {
  auto* self = const_cast<Encoder*>(this);
  out.emplace_back("base.token_emb", self->token_emb);
  out.emplace_back("base.pos_emb", self->pos_emb);
  out.emplace_back("base.ln_f_g", self->ln_f_g);
  out.emplace_back("base.ln_f_b", self->ln_f_b);
  for (size_t i = 0; i < layers.size(); ++i) {
    auto& l = self->layers[i];
    std::string p = "base.layer" + std::to_string(i);
    out.emplace_back(p + ".w_q", l.w_q);
    out.emplace_back(p + ".b_q", l.b_q);
    out.emplace_back(p + ".w_k", l.w_k);
    out.emplace_back(p + ".b_k", l.b_k);
    out.emplace_back(p + ".w_v", l.w_v);
    out.emplace_back(p + ".b_v", l.b_v);
    out.emplace_back(p + ".w_out", l.w_out);
    out.emplace_back(p + ".b_out", l.b_out);
    out.emplace_back(p + ".ln1_g", l.ln1_g);
    out.emplace_back(p + ".ln1_b", l.ln1_b);
    out.emplace_back(p + ".ln2_g", l.ln2_g);
    out.emplace_back(p + ".ln2_b", l.ln2_b);
    out.emplace_back(p + ".ffn_w1", l.ffn_w1);
    out.emplace_back(p + ".ffn_b1", l.ffn_b1);
    out.emplace_back(p + ".ffn_w2", l.ffn_w2);
    out.emplace_back(p + ".ffn_b2", l.ffn_b2);
    if (config.use_boolattn) {
      std::string bp = "boolattn.layer" + std::to_string(i);
      l.scope.register_params(bp + ".scope", out);
      l.bias.register_params(bp + ".bias", out);
    }
  }
  if (config.use_boolattn) {
    self->operators.register_params("boolattn.operators", out);
    self->cue.register_params("boolattn.cue", out);
    self->gate.register_params("boolattn.gate", out);
  }
}

namespace {
std::int64_t count_with_prefix(const ParamMap& params, const std::string& prefix) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params)
    if (name.rfind(prefix, 0) == 0) n += t.size();
  return n;
}
}  // namespace

std::int64_t Encoder::base_param_count() const {
  ParamMap params;
  register_params(params);
  return count_with_prefix(params, "base.");
}

std::int64_t Encoder::boolattn_param_count() const {
  ParamMap params;
  register_params(params);
  return count_with_prefix(params, "boolattn.");
}

double similarity(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("similarity: dimension mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace boolattn
