#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "boolattn/gradcheck.hpp"
#include "boolattn/pretrain.hpp"
#include "boolattn/retrieval.hpp"

using namespace boolattn;

namespace {

SyntheticCorpus tiny_corpus(std::uint64_t seed = 0) {
  CorpusParams p;
  p.num_docs = 60;
  p.num_queries = 40;
  p.num_attributes = 10;
  Rng rng(seed);
  return generate_corpus(p, rng);
}

RunConfig tiny_config() {
  RunConfig c;
  c.d_h = 16;
  c.heads = 2;
  c.head_dim = 8;
  c.d_ffn = 16;
  c.d_o = 4;
  c.conv_channels = 4;
  c.bias_hidden = 4;
  c.gate_hidden = 4;
  c.num_docs = 60;
  c.num_queries = 40;
  c.num_attributes = 10;
  c.batch_size = 8;
  c.epochs = 1;
  return c;
}

}  // namespace

TEST_CASE("pretrain examples carry consistent labels") {
  SyntheticCorpus corpus = tiny_corpus();
  Rng rng(1);
  auto examples = make_pretrain_examples(corpus, rng);
  REQUIRE(examples.size() == corpus.queries.size());
  for (size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const auto& q = corpus.queries[i];
    for (int k = 0; k < kNumOperators; ++k) {
      CHECK(ex.op_labels[k] == float(q.operators[k]));
      // cue labels imply the operator label
      bool any = false;
      for (float v : ex.cue_labels[k]) any = any || v > 0.5f;
      if (any) CHECK(ex.op_labels[k] == 1.0f);
      CHECK(ex.cue_labels[k].size() == ex.tokens.size());
    }
    // the positive really answers the query, the negative does not
    CHECK(!ex.positive_tokens.empty());
    CHECK(!ex.negative_tokens.empty());
  }
}

TEST_CASE("cue augmentation") {
  SyntheticCorpus corpus = tiny_corpus(2);
  Rng rng(3);
  auto examples = make_pretrain_examples(corpus, rng);
  const Vocab& v = corpus.vocab;

  SUBCASE("probability zero is the identity") {
    for (const auto& ex : examples) {
      Rng r(4);
      PretrainExample out = augment_cues(ex, v, r, 0.0);
      CHECK(out.tokens == ex.tokens);
      for (int k = 0; k < kNumOperators; ++k) CHECK(out.cue_labels[k] == ex.cue_labels[k]);
    }
  }
  SUBCASE("fixed seed is deterministic") {
    Rng r1(5), r2(5);
    for (const auto& ex : examples) {
      PretrainExample a = augment_cues(ex, v, r1, 1.0);
      PretrainExample b = augment_cues(ex, v, r2, 1.0);
      CHECK(a.tokens == b.tokens);
    }
  }
  SUBCASE("operator labels never change and replacements are cue-labeled") {
    Rng r(6);
    for (const auto& ex : examples) {
      PretrainExample out = augment_cues(ex, v, r, 1.0);
      CHECK(out.op_labels == ex.op_labels);
      // the AND/NOT token counts of the original equal the number of
      // labeled spans in the output
      for (int k : {0, 2}) {
        int orig = 0;
        for (float c : ex.cue_labels[k])
          if (c > 0.5f) ++orig;
        if (orig == 0) continue;
        int out_cues = 0;
        for (float c : out.cue_labels[k])
          if (c > 0.5f) ++out_cues;
        CHECK(out_cues >= orig);  // synonyms only grow the labeled span
      }
      for (size_t i = 0; i < out.tokens.size(); ++i)
        for (int k = 0; k < kNumOperators; ++k)
          CHECK(out.cue_labels[k].size() == out.tokens.size());
    }
  }
}

TEST_CASE("ranking metric unit cases") {
  std::vector<int> ranked = {9, 4, 7, 2, 5};
  SUBCASE("recall") {
    CHECK(recall_at_k(ranked, {4, 8}, 3) == doctest::Approx(0.5));
    CHECK(recall_at_k(ranked, {4, 7, 9}, 5) == doctest::Approx(1.0));
    CHECK(recall_at_k(ranked, {5}, 4) == doctest::Approx(0.0));  // rank K+1
    CHECK_THROWS_AS(recall_at_k(ranked, {}, 3), std::invalid_argument);
    // monotone in K
    std::vector<int> ans = {5, 7};
    double prev = 0.0;
    for (int k = 1; k <= 5; ++k) {
      double r = recall_at_k(ranked, ans, k);
      CHECK(r >= prev);
      prev = r;
    }
  }
  SUBCASE("mrr@10") {
    CHECK(mrr_at_10(ranked, {9}) == doctest::Approx(1.0));
    CHECK(mrr_at_10(ranked, {7}) == doctest::Approx(1.0 / 3));
    CHECK(mrr_at_10(ranked, {123}) == doctest::Approx(0.0));
    std::vector<int> long_rank;
    for (int i = 0; i < 30; ++i) long_rank.push_back(i);
    CHECK(mrr_at_10(long_rank, {15}) == doctest::Approx(0.0));  // outside top 10
  }
}

TEST_CASE("zero-epoch training leaves the metrics at the untrained baseline") {
  SyntheticCorpus corpus = tiny_corpus(4);
  RunConfig cfg = tiny_config();
  cfg.epochs = 0;
  Rng rng(0);
  Encoder query(cfg.encoder_config(corpus.vocab.size(), true), rng);
  Encoder doc(cfg.encoder_config(corpus.vocab.size(), false), rng);

  std::vector<int> all_ids;
  for (size_t i = 0; i < corpus.queries.size(); ++i) all_ids.push_back(int(i));
  RetrievalMetrics before = evaluate_retrieval(query, doc, corpus, all_ids, cfg, GateMode::Oracle);

  Rng train_rng(1);
  train_retriever(query, doc, corpus, cfg, train_rng);
  RetrievalMetrics after = evaluate_retrieval(query, doc, corpus, all_ids, cfg, GateMode::Oracle);
  CHECK(after.recall.at(20) == doctest::Approx(before.recall.at(20)));
  CHECK(after.mrr10 == doctest::Approx(before.mrr10));
}

TEST_CASE("one training epoch runs and splits train/val disjointly") {
  SyntheticCorpus corpus = tiny_corpus(5);
  RunConfig cfg = tiny_config();
  Rng rng(0);
  Encoder query(cfg.encoder_config(corpus.vocab.size(), true), rng);
  Encoder doc(cfg.encoder_config(corpus.vocab.size(), false), rng);
  Rng train_rng(2);
  TrainStats stats = train_retriever(query, doc, corpus, cfg, train_rng);
  CHECK(stats.epochs == 1);
  CHECK(stats.best_val_recall20 >= 0.0);
  std::set<int> train(stats.train_ids.begin(), stats.train_ids.end());
  for (int v : stats.val_ids) CHECK(train.count(v) == 0);
  CHECK(train.size() + stats.val_ids.size() <= corpus.queries.size());
}

TEST_CASE("short pretraining moves the objective and freezes the base") {
  SyntheticCorpus corpus = tiny_corpus(6);
  RunConfig cfg = tiny_config();
  cfg.pretrain_batch = 4;
  Rng rng(0);
  Encoder enc(cfg.encoder_config(corpus.vocab.size(), true), rng);

  Rng ex_rng(1);
  auto examples = make_pretrain_examples(corpus, ex_rng);
  std::vector<PretrainExample> train(examples.begin(), examples.begin() + 30);
  std::vector<PretrainExample> held(examples.begin() + 30, examples.end());

  // snapshot frozen parameter bytes
  ParamMap params;
  enc.register_params(params);
  std::vector<std::vector<float>> frozen_before;
  for (auto& [name, t] : params)
    if (name.rfind("base.", 0) == 0 && name != "base.token_emb" && name != "base.pos_emb")
      frozen_before.push_back(t.data());

  Rng pre_rng(3);
  PretrainStats stats = pretrain(enc, train, held, corpus.vocab, cfg, pre_rng);
  CHECK(stats.steps == 8);  // ceil(30/4)
  CHECK(stats.cue_f1 >= 0.0);
  CHECK(stats.gate_accuracy >= 0.0);

  size_t idx = 0;
  for (auto& [name, t] : params) {
    if (name.rfind("base.", 0) == 0 && name != "base.token_emb" && name != "base.pos_emb") {
      CHECK(t.data() == frozen_before[idx]);  // bitwise unchanged
      ++idx;
    }
    CHECK(t.requires_grad());  // flags restored
  }
}

TEST_CASE("gradient check suite passes on a seeded model") {
  GradCheckReport report = run_gradcheck(0);
  CHECK(report.checked > 50);
  for (const auto& e : report.entries) {
    INFO(e.param, "[", e.index, "] analytic ", e.analytic, " numeric ", e.numeric);
    CHECK(e.pass);
  }
  CHECK(report.all_pass);
}
