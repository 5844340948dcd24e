#pragma once

#include "boolattn/config.hpp"
#include "boolattn/corpus.hpp"
#include "boolattn/encoder.hpp"

namespace boolattn {

struct PretrainExample {
  std::vector<int> tokens;  // unpadded query token ids
  std::array<std::vector<float>, kNumOperators> cue_labels;  // per token, {0,1}
  std::array<float, kNumOperators> op_labels{};
  std::vector<int> positive_tokens;
  std::vector<int> negative_tokens;
};

/// One example per generated query: cue labels by word matching, operator
/// labels from the template, a positive answer document and a random
/// non-answer document for the triplet term.
std::vector<PretrainExample> make_pretrain_examples(const SyntheticCorpus& corpus, Rng& rng);

/// Replaces single-token cues with multi-token synonyms ("and" -> "as well
/// as" / "are also" / "including", "not" -> "other than" / "excluding") with
/// probability prob per cue; every replacement token is cue-labeled.
/// Operator labels never change.
PretrainExample augment_cues(const PretrainExample& example, const Vocab& vocab, Rng& rng,
                             double prob);

struct PretrainStats {
  double early_loss = 0.0;  // mean objective over the first 50 steps
  double late_loss = 0.0;   // mean objective over the last 50 steps
  double cue_f1 = 0.0;      // held-out, any-operator micro F1
  double gate_accuracy = 0.0;
  int steps = 0;
};

/// Appendix-style pretraining: cue BCE + gate BCE + alpha * triplet, one
/// epoch at a low learning rate, with everything frozen except the Boolean
/// modules and the token/position embeddings.
PretrainStats pretrain(Encoder& encoder, const std::vector<PretrainExample>& train,
                       const std::vector<PretrainExample>& heldout, const Vocab& vocab,
                       const RunConfig& config, Rng& rng);

double cue_f1(const Encoder& encoder, const std::vector<PretrainExample>& examples,
              const RunConfig& config);
double gate_accuracy(const Encoder& encoder, const std::vector<PretrainExample>& examples,
                     const RunConfig& config);

}  // namespace boolattn
