#include "boolattn/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "boolattn/losses.hpp"
#include "boolattn/optimizer.hpp"

namespace boolattn {

namespace {

constexpr int kEvalBatch = 32;

struct Padded {
  std::vector<int> tokens;
  std::vector<float> pad_mask;
  int batch = 0;
  int len = 0;
};

Padded pad_texts(const Vocab& vocab, const std::vector<const std::string*>& texts, int max_len) {
  Padded p;
  p.batch = static_cast<int>(texts.size());
  std::vector<std::vector<int>> seqs(p.batch);
  int longest = 1;
  for (int i = 0; i < p.batch; ++i) {
    int len = 0;
    std::vector<int> padded = tokenize(vocab, *texts[i], max_len, &len);
    seqs[i].assign(padded.begin(), padded.begin() + len);
    longest = std::max(longest, len);
  }
  p.len = longest;
  p.tokens.assign(static_cast<size_t>(p.batch) * p.len, 0);
  p.pad_mask.assign(static_cast<size_t>(p.batch) * p.len, 0.0f);
  for (int i = 0; i < p.batch; ++i)
    for (size_t j = 0; j < seqs[i].size(); ++j) {
      p.tokens[static_cast<size_t>(i) * p.len + j] = seqs[i][j];
      p.pad_mask[static_cast<size_t>(i) * p.len + j] = 1.0f;
    }
  return p;
}

/// Pooled embeddings for a list of texts, batched, no graph.
std::vector<std::vector<float>> embed_texts(const Encoder& encoder, const Vocab& vocab,
                                            const std::vector<const std::string*>& texts,
                                            int max_len, GateMode gate_mode,
                                            const std::vector<std::array<int, 3>>* operators) {
  NoGradGuard no_grad;
  std::vector<std::vector<float>> out(texts.size());
  int d = encoder.config.d_h;
  for (size_t start = 0; start < texts.size(); start += kEvalBatch) {
    size_t end = std::min(texts.size(), start + kEvalBatch);
    std::vector<const std::string*> chunk(texts.begin() + start, texts.begin() + end);
    Padded p = pad_texts(vocab, chunk, max_len);

    EncodeOptions opts;
    opts.gate_mode = gate_mode;
    std::vector<float> gates;
    if (gate_mode == GateMode::Oracle) {
      gates.assign(static_cast<size_t>(p.batch) * kNumOperators, 0.0f);
      if (operators)
        for (int i = 0; i < p.batch; ++i)
          for (int k = 0; k < kNumOperators; ++k)
            gates[static_cast<size_t>(i) * kNumOperators + k] =
                static_cast<float>((*operators)[start + i][k]);
      opts.oracle_gates = &gates;
    }
    EncodedSequence enc = encoder.encode(p.tokens, p.batch, p.len, p.pad_mask, opts);
    for (int i = 0; i < p.batch; ++i) {
      const float* row = enc.pooled.data().data() + static_cast<size_t>(i) * d;
      out[start + i].assign(row, row + d);
    }
  }
  return out;
}

}  // namespace

double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& answers, int k) {
  if (answers.empty()) throw std::invalid_argument("recall_at_k: empty answer set");
  int cutoff = std::min<int>(k, static_cast<int>(ranked.size()));
  int hits = 0;
  for (int r = 0; r < cutoff; ++r)
    if (std::binary_search(answers.begin(), answers.end(), ranked[r])) ++hits;
  return static_cast<double>(hits) / answers.size();
}

double mrr_at_10(const std::vector<int>& ranked, const std::vector<int>& answers) {
  int cutoff = std::min<int>(10, static_cast<int>(ranked.size()));
  for (int r = 0; r < cutoff; ++r)
    if (std::binary_search(answers.begin(), answers.end(), ranked[r])) return 1.0 / (r + 1);
  return 0.0;
}

RetrievalMetrics evaluate_retrieval(const Encoder& query_encoder, const Encoder& doc_encoder,
                                    const SyntheticCorpus& corpus,
                                    const std::vector<int>& query_ids, const RunConfig& config,
                                    GateMode gate_mode) {
  std::vector<const std::string*> doc_texts;
  doc_texts.reserve(corpus.docs.size());
  for (const auto& d : corpus.docs) doc_texts.push_back(&d.text);
  auto doc_vecs = embed_texts(doc_encoder, corpus.vocab, doc_texts, config.max_doc_len,
                              GateMode::Off, nullptr);

  std::vector<const std::string*> query_texts;
  std::vector<std::array<int, 3>> query_ops;
  for (int qi : query_ids) {
    query_texts.push_back(&corpus.queries[qi].text);
    query_ops.push_back(corpus.queries[qi].operators);
  }
  GateMode mode = query_encoder.config.use_boolattn ? gate_mode : GateMode::Off;
  auto query_vecs = embed_texts(query_encoder, corpus.vocab, query_texts, config.max_query_len,
                                mode, &query_ops);

  RetrievalMetrics m;
  std::map<int, int> template_counts;
  std::vector<int> order(corpus.docs.size());

  for (size_t q = 0; q < query_ids.size(); ++q) {
    const Query& query = corpus.queries[query_ids[q]];
    if (query.answer_ids.empty()) continue;

    std::vector<double> scores(corpus.docs.size());
    for (size_t d = 0; d < corpus.docs.size(); ++d)
      scores[d] = similarity(query_vecs[q], doc_vecs[d]);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });

    for (int k : config.recall_ks) m.recall[k] += recall_at_k(order, query.answer_ids, k);
    double recall20 = recall_at_k(order, query.answer_ids, 20);
    double rr = mrr_at_10(order, query.answer_ids);

    m.mrr10 += rr;
    m.recall20_by_template[query.template_id] += recall20;
    m.mrr10_by_template[query.template_id] += rr;
    ++template_counts[query.template_id];
    ++m.num_queries;
    if (query.template_id == 4 || query.template_id == 7) {
      m.mrr10_not += rr;
      ++m.num_not_queries;
    }
  }

  if (m.num_queries > 0) {
    for (auto& [k, v] : m.recall) v /= m.num_queries;
    m.mrr10 /= m.num_queries;
  }
  if (m.num_not_queries > 0) m.mrr10_not /= m.num_not_queries;
  for (auto& [t, v] : m.recall20_by_template) v /= template_counts[t];
  for (auto& [t, v] : m.mrr10_by_template) v /= template_counts[t];
  return m;
}

namespace {

std::vector<Tensor> all_params(Encoder& query_encoder, Encoder& doc_encoder) {
  ParamMap pm;
  query_encoder.register_params(pm);
  doc_encoder.register_params(pm);
  std::vector<Tensor> out;
  out.reserve(pm.size());
  for (auto& [name, t] : pm) out.push_back(t);
  return out;
}

}  // namespace

TrainStats train_retriever(Encoder& query_encoder, Encoder& doc_encoder,
                           const SyntheticCorpus& corpus, const RunConfig& config, Rng& rng) {
  int num_docs = static_cast<int>(corpus.docs.size());
  std::vector<int> ids;
  for (size_t i = 0; i < corpus.queries.size(); ++i)
    if (!corpus.queries[i].answer_ids.empty()) ids.push_back(static_cast<int>(i));
  for (size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.uniform_int(static_cast<int>(i))]);

  int val_count = std::max(1, static_cast<int>(ids.size() * config.val_fraction));
  TrainStats stats;
  stats.val_ids.assign(ids.begin(), ids.begin() + val_count);
  stats.train_ids.assign(ids.begin() + val_count, ids.end());
  if (stats.train_ids.empty()) throw std::runtime_error("no training queries after split");

  std::vector<Tensor> params = all_params(query_encoder, doc_encoder);
  AdamW opt(params, static_cast<float>(config.train_lr), static_cast<float>(config.weight_decay));

  std::vector<std::vector<float>> best;
  double best_recall = -1.0;
  auto snapshot = [&] {
    best.clear();
    for (const auto& t : params) best.push_back(t.data());
  };
  auto restore = [&] {
    for (size_t i = 0; i < params.size(); ++i) params[i].data() = best[i];
  };

  int K = config.negatives;
  int d = query_encoder.config.d_h;
  std::vector<int> train_order = stats.train_ids;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = train_order.size(); i > 1; --i)
      std::swap(train_order[i - 1], train_order[rng.uniform_int(static_cast<int>(i))]);

    double epoch_loss = 0.0;
    int steps = 0;
    for (size_t start = 0; start < train_order.size(); start += config.batch_size) {
      size_t end = std::min(train_order.size(), start + config.batch_size);
      int B = static_cast<int>(end - start);

      std::vector<const std::string*> q_texts, pos_texts, neg_texts;
      std::vector<float> gates(static_cast<size_t>(B) * kNumOperators, 0.0f);
      for (int i = 0; i < B; ++i) {
        const Query& q = corpus.queries[train_order[start + i]];
        q_texts.push_back(&q.text);
        for (int k = 0; k < kNumOperators; ++k)
          gates[static_cast<size_t>(i) * kNumOperators + k] = static_cast<float>(q.operators[k]);
        // Fresh positive each step.
        int pos = q.answer_ids[rng.uniform_int(static_cast<int>(q.answer_ids.size()))];
        pos_texts.push_back(&corpus.docs[pos].text);
        for (int k = 0; k < K; ++k) {
          int neg;
          do {
            neg = rng.uniform_int(num_docs);
          } while (std::binary_search(q.answer_ids.begin(), q.answer_ids.end(), neg));
          neg_texts.push_back(&corpus.docs[neg].text);
        }
      }

      Padded qp = pad_texts(corpus.vocab, q_texts, config.max_query_len);
      Padded pp = pad_texts(corpus.vocab, pos_texts, config.max_doc_len);
      Padded np = pad_texts(corpus.vocab, neg_texts, config.max_doc_len);

      EncodeOptions q_opts;
      q_opts.gate_mode = query_encoder.config.use_boolattn ? GateMode::Oracle : GateMode::Off;
      q_opts.oracle_gates = &gates;
      q_opts.training = true;
      q_opts.rng = &rng;
      EncodedSequence q_enc = query_encoder.encode(qp.tokens, qp.batch, qp.len, qp.pad_mask, q_opts);

      EncodeOptions d_opts;
      d_opts.gate_mode = GateMode::Off;
      d_opts.training = true;
      d_opts.rng = &rng;
      EncodedSequence p_enc = doc_encoder.encode(pp.tokens, pp.batch, pp.len, pp.pad_mask, d_opts);
      EncodedSequence n_enc = doc_encoder.encode(np.tokens, np.batch, np.len, np.pad_mask, d_opts);

      Tensor negs = reshape(n_enc.pooled, {B, K, d});
      Tensor loss = contrastive_loss(q_enc.pooled, p_enc.pooled, negs);
      opt.zero_grad();
      backward(loss);
      opt.step();
      epoch_loss += loss.item();
      ++steps;
    }
    stats.final_train_loss = steps > 0 ? epoch_loss / steps : 0.0;

    RetrievalMetrics val = evaluate_retrieval(query_encoder, doc_encoder, corpus, stats.val_ids,
                                              config, GateMode::Oracle);
    double recall20 = val.recall.count(20) ? val.recall.at(20) : 0.0;
    if (recall20 > best_recall) {
      best_recall = recall20;
      snapshot();
    }
    ++stats.epochs;
  }

  if (!best.empty()) restore();
  stats.best_val_recall20 = best_recall;
  return stats;
}

}  // namespace boolattn
