#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "boolattn/tensor.hpp"

namespace boolattn {

struct Vocab {
  std::vector<std::string> words;  // index == token id; id 0 is [PAD]
  std::unordered_map<std::string, int> index;

  int add(const std::string& word);
  int id(const std::string& word) const;  // throws on unknown word
  int size() const { return static_cast<int>(words.size()); }

  /// Fixed vocabulary: padding, template words, Boolean cues and their
  /// synonyms, then num_attributes attribute words ("attr0"...).
  static Vocab boolean_vocab(int num_attributes);
};

struct Document {
  int id = 0;
  std::vector<std::string> attrs;
  std::string text;
};

struct Query {
  int id = 0;
  int template_id = 0;  // 1..7
  std::string text;
  std::array<int, 3> operators{};  // AND/OR/NOT presence
  std::vector<int> answer_ids;     // sorted document ids
};

struct SyntheticCorpus {
  std::vector<Document> docs;
  std::vector<Query> queries;
  Vocab vocab;
};

struct CorpusParams {
  int num_docs = 500;
  int num_queries = 300;
  int num_attributes = 24;
  int min_doc_attrs = 3;
  int max_doc_attrs = 6;
};

/// Attribute-bag documents plus queries drawn from seven Boolean templates,
/// with answer sets computed by exact set algebra. Unsatisfiable draws are
/// resampled with bounded retries.
SyntheticCorpus generate_corpus(const CorpusParams& params, Rng& rng);

// Exact set algebra over sorted id vectors.
std::vector<int> set_intersect(const std::vector<int>& a, const std::vector<int>& b);
std::vector<int> set_union(const std::vector<int>& a, const std::vector<int>& b);
std::vector<int> set_difference(const std::vector<int>& a, const std::vector<int>& b);

/// Whitespace tokenization against the fixed vocabulary, truncated/padded to
/// max_len with [PAD]=0. Returns the padded ids and writes the unpadded
/// length to *out_len when non-null.
std::vector<int> tokenize(const Vocab& vocab, const std::string& text, int max_len,
                          int* out_len = nullptr);

/// Line-delimited persistence: docs.jsonl + queries.jsonl + vocab.txt.
void save_corpus(const SyntheticCorpus& corpus, const std::string& dir);
SyntheticCorpus load_corpus(const std::string& dir);

/// Token positions of each operator's cue words within a tokenized text.
std::array<std::vector<int>, 3> cue_positions_for(const Vocab& vocab,
                                                  const std::vector<int>& tokens, int len);

}  // namespace boolattn
