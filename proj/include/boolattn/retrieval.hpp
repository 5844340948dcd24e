#pragma once

#include <map>

#include "boolattn/config.hpp"
#include "boolattn/corpus.hpp"
#include "boolattn/encoder.hpp"

namespace boolattn {

/// |top-K of ranked ∩ answers| / |answers|. answers must be sorted.
double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& answers, int k);
/// 1/rank of the first relevant document within the top 10, else 0.
double mrr_at_10(const std::vector<int>& ranked, const std::vector<int>& answers);

struct RetrievalMetrics {
  std::map<int, double> recall;                 // K -> mean Recall@K
  double mrr10 = 0.0;                           // mean reciprocal rank, cutoff 10
  double mrr10_not = 0.0;                       // restricted to NOT templates (4 and 7)
  std::map<int, double> recall20_by_template;   // template id -> mean Recall@20
  std::map<int, double> mrr10_by_template;
  int num_queries = 0;
  int num_not_queries = 0;
};

/// Encodes every document with the document encoder and the listed queries
/// with the query encoder, ranks documents by pooled dot product and scores
/// against the exact answer sets. gate_mode applies to the query side only.
RetrievalMetrics evaluate_retrieval(const Encoder& query_encoder, const Encoder& doc_encoder,
                                    const SyntheticCorpus& corpus,
                                    const std::vector<int>& query_ids, const RunConfig& config,
                                    GateMode gate_mode);

struct TrainStats {
  double best_val_recall20 = 0.0;
  double final_train_loss = 0.0;
  int epochs = 0;
  std::vector<int> train_ids;
  std::vector<int> val_ids;
};

/// Dual-encoder contrastive fine-tuning. Each step draws a fresh positive
/// from the query's answer set and `negatives` random non-answer documents.
/// Keeps the parameters from the epoch with the best validation Recall@20.
TrainStats train_retriever(Encoder& query_encoder, Encoder& doc_encoder,
                           const SyntheticCorpus& corpus, const RunConfig& config, Rng& rng);

}  // namespace boolattn
