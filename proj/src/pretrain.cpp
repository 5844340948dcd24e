#include "boolattn/pretrain.hpp"

#include <algorithm>
#include <numeric>

#include "boolattn/losses.hpp"
#include "boolattn/optimizer.hpp"

namespace boolattn {

std::vector<PretrainExample> make_pretrain_examples(const SyntheticCorpus& corpus, Rng& rng) {
  std::vector<PretrainExample> out;
  out.reserve(corpus.queries.size());
  int num_docs = static_cast<int>(corpus.docs.size());
  for (const auto& q : corpus.queries) {
    PretrainExample ex;
    int len = 0;
    std::vector<int> padded = tokenize(corpus.vocab, q.text, 64, &len);
    ex.tokens.assign(padded.begin(), padded.begin() + len);
    auto cues = cue_positions_for(corpus.vocab, ex.tokens, len);
    for (int k = 0; k < kNumOperators; ++k) {
      ex.cue_labels[k].assign(len, 0.0f);
      for (int p : cues[k]) ex.cue_labels[k][p] = 1.0f;
      ex.op_labels[k] = static_cast<float>(q.operators[k]);
    }
    int pos_id = q.answer_ids[rng.uniform_int(static_cast<int>(q.answer_ids.size()))];
    int neg_id;
    do {
      neg_id = rng.uniform_int(num_docs);
    } while (std::binary_search(q.answer_ids.begin(), q.answer_ids.end(), neg_id));
    int plen = 0, nlen = 0;
    std::vector<int> pt = tokenize(corpus.vocab, corpus.docs[pos_id].text, 64, &plen);
    std::vector<int> nt = tokenize(corpus.vocab, corpus.docs[neg_id].text, 64, &nlen);
    ex.positive_tokens.assign(pt.begin(), pt.begin() + plen);
    ex.negative_tokens.assign(nt.begin(), nt.begin() + nlen);
    out.push_back(std::move(ex));
  }
  return out;
}

PretrainExample augment_cues(const PretrainExample& example, const Vocab& vocab, Rng& rng,
                             double prob) {
  static const std::vector<std::vector<std::string>> and_synonyms = {
      {"as", "well", "as"}, {"are", "also"}, {"including"}};
  static const std::vector<std::vector<std::string>> not_synonyms = {{"other", "than"},
                                                                     {"excluding"}};
  int and_id = vocab.id("and");
  int not_id = vocab.id("not");

  PretrainExample out;
  out.op_labels = example.op_labels;
  for (int k = 0; k < kNumOperators; ++k) out.cue_labels[k].clear();
  for (size_t i = 0; i < example.tokens.size(); ++i) {
    int tok = example.tokens[i];
    const std::vector<std::string>* replacement = nullptr;
    int op = -1;
    if (tok == and_id && rng.uniform() < prob) {
      replacement = &and_synonyms[rng.uniform_int(static_cast<int>(and_synonyms.size()))];
      op = static_cast<int>(OperatorKind::And);
    } else if (tok == not_id && rng.uniform() < prob) {
      replacement = &not_synonyms[rng.uniform_int(static_cast<int>(not_synonyms.size()))];
      op = static_cast<int>(OperatorKind::Not);
    }
    if (replacement) {
      for (const auto& w : *replacement) {
        out.tokens.push_back(vocab.id(w));
        for (int k = 0; k < kNumOperators; ++k)
          out.cue_labels[k].push_back(k == op ? 1.0f : 0.0f);
      }
    } else {
      out.tokens.push_back(tok);
      for (int k = 0; k < kNumOperators; ++k) out.cue_labels[k].push_back(example.cue_labels[k][i]);
    }
  }
  out.positive_tokens = example.positive_tokens;
  out.negative_tokens = example.negative_tokens;
  return out;
}

namespace {

struct Batch {
  std::vector<int> tokens;
  std::vector<float> pad_mask;
  int batch = 0;
  int len = 0;
};

Batch pad_batch(const std::vector<const std::vector<int>*>& seqs, int max_len) {
  Batch b;
  b.batch = static_cast<int>(seqs.size());
  int longest = 1;
  for (const auto* s : seqs)
    longest = std::max(longest, static_cast<int>(std::min<size_t>(s->size(), max_len)));
  b.len = longest;
  b.tokens.assign(static_cast<size_t>(b.batch) * b.len, 0);
  b.pad_mask.assign(static_cast<size_t>(b.batch) * b.len, 0.0f);
  for (int i = 0; i < b.batch; ++i) {
    int n = static_cast<int>(std::min<size_t>(seqs[i]->size(), max_len));
    for (int j = 0; j < n; ++j) {
      b.tokens[static_cast<size_t>(i) * b.len + j] = (*seqs[i])[j];
      b.pad_mask[static_cast<size_t>(i) * b.len + j] = 1.0f;
    }
  }
  return b;
}

}  // namespace

PretrainStats pretrain(Encoder& encoder, const std::vector<PretrainExample>& train,
                       const std::vector<PretrainExample>& heldout, const Vocab& vocab,
                       const RunConfig& config, Rng& rng) {
  ParamMap params;
  encoder.register_params(params);

  // Only the Boolean modules and the token/position embeddings update.
  std::vector<Tensor> trainable;
  std::vector<Tensor> frozen;
  for (auto& [name, t] : params) {
    bool update = name.rfind("boolattn.", 0) == 0 || name == "base.token_emb" ||
                  name == "base.pos_emb";
    if (update) {
      trainable.push_back(t);
    } else {
      t.set_requires_grad(false);
      frozen.push_back(t);
    }
  }

  // Plain SGD: at this learning rate the update scale tracks the raw
  // gradient scale, which the init is tuned for; Adam's normalized steps cap
  // total movement at lr*steps and stall the cue and gate heads.
  Sgd opt(trainable, static_cast<float>(config.pretrain_lr));
  PretrainStats stats;
  std::vector<double> losses;

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  int bs = std::max(1, config.pretrain_batch);

  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    // Deterministic shuffle from the run rng.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);

    for (size_t start = 0; start < order.size(); start += bs) {
      size_t end = std::min(order.size(), start + bs);
      std::vector<PretrainExample> batch_ex;
      for (size_t i = start; i < end; ++i)
        batch_ex.push_back(augment_cues(train[order[i]], vocab, rng, config.augment_prob));

      std::vector<const std::vector<int>*> anchor_seqs, pos_seqs, neg_seqs;
      for (const auto& ex : batch_ex) {
        anchor_seqs.push_back(&ex.tokens);
        pos_seqs.push_back(&ex.positive_tokens);
        neg_seqs.push_back(&ex.negative_tokens);
      }
      Batch anchor = pad_batch(anchor_seqs, config.max_query_len);
      Batch pos = pad_batch(pos_seqs, config.max_doc_len);
      Batch neg = pad_batch(neg_seqs, config.max_doc_len);

      int B = anchor.batch, L = anchor.len;
      std::vector<float> gates(static_cast<size_t>(B) * kNumOperators, 0.0f);
      std::vector<float> gate_targets(static_cast<size_t>(B) * kNumOperators, 0.0f);
      for (int i = 0; i < B; ++i)
        for (int k = 0; k < kNumOperators; ++k) {
          gates[static_cast<size_t>(i) * kNumOperators + k] = batch_ex[i].op_labels[k];
          gate_targets[static_cast<size_t>(i) * kNumOperators + k] = batch_ex[i].op_labels[k];
        }

      EncodeOptions opts;
      opts.gate_mode = GateMode::Oracle;
      opts.oracle_gates = &gates;
      opts.training = true;
      opts.rng = &rng;
      EncodedSequence enc = encoder.encode(anchor.tokens, B, L, anchor.pad_mask, opts);

      // One cue map y per position (any operator): the operator heads share
      // W_c and differ only by a constant shift, so per-operator targets have
      // no attainable optimum; each head trains against the union map.
      std::vector<float> targets(static_cast<size_t>(B) * L, 0.0f);
      for (int i = 0; i < B; ++i)
        for (int k = 0; k < kNumOperators; ++k)
          for (size_t j = 0; j < batch_ex[i].cue_labels[k].size() && j < static_cast<size_t>(L);
               ++j)
            if (batch_ex[i].cue_labels[k][j] > 0.5f) targets[static_cast<size_t>(i) * L + j] = 1.0f;
      Tensor l_cue;
      for (int k = 0; k < kNumOperators; ++k) {
        Tensor lk = cue_loss(enc.cue_probs[k], targets);
        l_cue = l_cue.defined() ? add(l_cue, lk) : lk;
      }
      l_cue = scale(l_cue, 1.0f / kNumOperators);

      Tensor l_gate = gate_loss(enc.gate_probs, gate_targets);

      std::vector<float> zero_gates_pos(static_cast<size_t>(pos.batch) * kNumOperators, 0.0f);
      EncodeOptions doc_opts;
      doc_opts.gate_mode = GateMode::Oracle;
      doc_opts.oracle_gates = &zero_gates_pos;
      doc_opts.training = true;
      doc_opts.rng = &rng;
      EncodedSequence pos_enc = encoder.encode(pos.tokens, pos.batch, pos.len, pos.pad_mask, doc_opts);
      EncodedSequence neg_enc = encoder.encode(neg.tokens, neg.batch, neg.len, neg.pad_mask, doc_opts);
      Tensor l_triplet = triplet_loss(enc.pooled, pos_enc.pooled, neg_enc.pooled,
                                      static_cast<float>(config.triplet_margin));

      Tensor objective =
          pretrain_objective(l_cue, l_gate, l_triplet, static_cast<float>(config.triplet_alpha));
      opt.zero_grad();
      backward(objective);
      opt.step();
      losses.push_back(objective.item());
    }
  }

  for (auto& t : frozen) t.set_requires_grad(true);

  stats.steps = static_cast<int>(losses.size());
  int window = std::min<size_t>(50, losses.size());
  if (window > 0) {
    stats.early_loss = std::accumulate(losses.begin(), losses.begin() + window, 0.0) / window;
    stats.late_loss = std::accumulate(losses.end() - window, losses.end(), 0.0) / window;
  }
  stats.cue_f1 = cue_f1(encoder, heldout, config);
  stats.gate_accuracy = gate_accuracy(encoder, heldout, config);
  return stats;
}

namespace {

EncodedSequence encode_eval(const Encoder& encoder, const PretrainExample& ex,
                            const RunConfig& config) {
  std::vector<const std::vector<int>*> seqs{&ex.tokens};
  Batch b = pad_batch(seqs, config.max_query_len);
  EncodeOptions opts;
  opts.gate_mode = GateMode::Off;
  return encoder.encode(b.tokens, 1, b.len, b.pad_mask, opts);
}

}  // namespace

double cue_f1(const Encoder& encoder, const std::vector<PretrainExample>& examples,
              const RunConfig& config) {
  NoGradGuard no_grad;
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& ex : examples) {
    EncodedSequence enc = encode_eval(encoder, ex, config);
    int len = static_cast<int>(std::min<size_t>(ex.tokens.size(), config.max_query_len));
    for (int j = 0; j < len; ++j) {
      bool label = false, predicted = false;
      for (int k = 0; k < kNumOperators; ++k) {
        if (j < static_cast<int>(ex.cue_labels[k].size()) && ex.cue_labels[k][j] > 0.5f)
          label = true;
        if (enc.cue_probs[k].data()[j] > 0.5f) predicted = true;
      }
      if (predicted && label) ++tp;
      else if (predicted) ++fp;
      else if (label) ++fn;
    }
  }
  if (tp + fp + fn == 0) return 1.0;
  double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double gate_accuracy(const Encoder& encoder, const std::vector<PretrainExample>& examples,
                     const RunConfig& config) {
  NoGradGuard no_grad;
  std::int64_t correct = 0, total = 0;
  for (const auto& ex : examples) {
    EncodedSequence enc = encode_eval(encoder, ex, config);
    for (int k = 0; k < kNumOperators; ++k) {
      bool predicted = enc.gate_probs.data()[k] > 0.5f;
      bool label = ex.op_labels[k] > 0.5f;
      if (predicted == label) ++correct;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 1.0;
}

}  // namespace boolattn
