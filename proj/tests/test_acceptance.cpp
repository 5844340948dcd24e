// End-to-end acceptance gate. Each numbered criterion prints exactly one
// PASS/FAIL line; the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "boolattn/checkpoint.hpp"
#include "boolattn/gradcheck.hpp"
#include "boolattn/losses.hpp"
#include "boolattn/pretrain.hpp"
#include "boolattn/retrieval.hpp"

using namespace boolattn;
using clk = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int n, const std::string& name, bool ok, const std::string& detail = "") {
  if (!ok) ++g_failures;
  std::printf("[%2d] %s: %s%s%s\n", n, ok ? "PASS" : "FAIL", name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
}

double secs(clk::time_point a) { return std::chrono::duration<double>(clk::now() - a).count(); }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

EncoderConfig small_config(bool use_boolattn) {
  EncoderConfig c;
  c.vocab_size = 20;
  c.d_h = 8;
  c.layers = 2;
  c.heads = 2;
  c.head_dim = 4;
  c.max_len = 16;
  c.d_ffn = 16;
  c.d_o = 4;
  c.conv_channels = 4;
  c.bias_hidden = 4;
  c.gate_hidden = 4;
  c.use_boolattn = use_boolattn;
  return c;
}

void copy_base(const Encoder& src, Encoder& dst) {
  ParamMap a, b;
  src.register_params(a);
  dst.register_params(b);
  for (auto& [name, t] : b) {
    if (name.rfind("base.", 0) != 0) continue;
    for (auto& [sname, st] : a)
      if (sname == name) t.data() = st.data();
  }
}

// --- 1: gates forced off match a plain encoder with shared weights --------

void criterion_reduction() {
  Rng rng(0);
  Encoder with(small_config(true), rng);
  Rng rng2(1);
  Encoder plain(small_config(false), rng2);
  copy_base(with, plain);

  const int B = 2, L = 8;
  Rng data_rng(7);
  std::vector<int> tokens(B * L);
  std::vector<float> pad(B * L, 1.0f);
  for (auto& t : tokens) t = 1 + data_rng.uniform_int(19);
  pad[B * L - 1] = 0.0f;

  std::vector<float> zero_gates(B * kNumOperators, 0.0f);
  EncodeOptions on;
  on.gate_mode = GateMode::Oracle;
  on.oracle_gates = &zero_gates;
  EncodeOptions off;
  off.gate_mode = GateMode::Off;

  EncodedSequence e1 = with.encode(tokens, B, L, pad, on);
  EncodedSequence e2 = plain.encode(tokens, B, L, pad, off);
  float max_diff = 0.0f;
  for (std::int64_t i = 0; i < e1.hidden.size(); ++i)
    max_diff = std::max(max_diff, std::abs(e1.hidden.data()[i] - e2.hidden.data()[i]));
  for (std::int64_t i = 0; i < e1.pooled.size(); ++i)
    max_diff = std::max(max_diff, std::abs(e1.pooled.data()[i] - e2.pooled.data()[i]));
  report(1, "reduction equivalence with gates forced off (B=2, L=8)", max_diff <= 1e-6f,
         fmt("max |diff| = %.2e", max_diff));
}

// --- 2: negated keys receive strictly less post-softmax attention ---------

void criterion_negation() {
  Rng rng(11);
  const int B = 1, heads = 2, L = 4, D = 3;
  Tensor q = Tensor::uniform({B, heads, L, D}, -1, 1, rng);
  Tensor k = Tensor::uniform({B, heads, L, D}, -1, 1, rng);
  Tensor v = Tensor::uniform({B, heads, L, D}, -1, 1, rng);
  std::vector<float> pad(L, 1.0f);

  Tensor hard({1, L}, {0, 1, 1, 0});  // keys 1 and 2 are negated
  ScopeResult scope = ScopePredictor::mutualize(hard, heads, OperatorKind::Not);
  Tensor bias({1, L}, {0.9f, 1.4f, 0.8f, 1.1f});
  Tensor gate({1}, {1.0f});
  Tensor s_not = operator_bias(gate, scope, bias, OperatorKind::Not, heads);
  Tensor s_bool = combine(Tensor::zeros({B, heads, L, L}), Tensor::zeros({B, heads, L, L}), s_not);

  AttentionOutput off = attend(q, k, v, Tensor(), pad);
  AttentionOutput on = attend(q, k, v, s_bool, pad);
  bool ok = true;
  for (int h = 0; h < heads && ok; ++h)
    for (int i = 0; i < L && ok; ++i)
      for (int j : {1, 2})
        if (on.probs.data()[(h * L + i) * L + j] >= off.probs.data()[(h * L + i) * L + j])
          ok = false;
  report(2, "negation strictly downweights scoped keys, every query row", ok);
}

// --- 3: finite-difference gradient suite -----------------------------------

void criterion_gradients() {
  GradCheckReport r = run_gradcheck(0);
  report(3, "central-difference gradients on every boolean parameter group",
         r.all_pass && r.checked > 50, fmt("%d checks, %d failed", r.checked, r.failed));
}

// --- 4: closed-form loss values --------------------------------------------

void criterion_losses() {
  const double ln2 = std::log(2.0);
  Tensor half({1, 2}, {0.5f, 0.5f});
  double cue = cue_loss(half, {1.0f, 0.0f}).data()[0];
  Tensor half3({1, 3}, {0.5f, 0.5f, 0.5f});
  double gate = gate_loss(half3, {1.0f, 0.0f, 1.0f}).data()[0];

  Tensor one = Tensor::scalar(1.0f);
  double combined = pretrain_objective(one, one, one, 0.2f).data()[0];

  // q.p == q.n_i for every negative -> -ln(1/6)
  Tensor q({1, 2}, {1.0f, 1.0f});
  Tensor pos({1, 2}, {0.5f, 0.5f});
  std::vector<float> negs_data(5 * 2, 0.5f);
  Tensor negs({1, 5, 2}, negs_data);
  double uniform = contrastive_loss(q, pos, negs).data()[0];

  bool ok = std::abs(cue - ln2) <= 1e-6 && std::abs(gate - ln2) <= 1e-6 &&
            std::abs(combined - 2.2) <= 1e-6 && std::abs(uniform - std::log(6.0)) <= 1e-6;
  report(4, "closed-form losses: ln 2 / 2.2 / ln 6", ok,
         fmt("cue=%.7f gate=%.7f objective=%.7f uniform=%.7f", cue, gate, combined, uniform));
}

// --- 5: mutualize against the outer-product oracle on all masks ------------

void criterion_scope_algebra() {
  bool ok = true;
  for (int L = 1; L <= 6 && ok; ++L)
    for (int bits = 0; bits < (1 << L) && ok; ++bits) {
      std::vector<float> mask(L);
      for (int i = 0; i < L; ++i) mask[i] = static_cast<float>((bits >> i) & 1);
      Tensor hard({1, L}, mask);
      ScopeResult res = ScopePredictor::mutualize(hard, 2, OperatorKind::And);
      ScopeResult not_res = ScopePredictor::mutualize(hard, 2, OperatorKind::Not);
      for (int h = 0; h < 2 && ok; ++h)
        for (int i = 0; i < L && ok; ++i) {
          if (not_res.unary.data()[h * L + i] != mask[i]) ok = false;
          for (int j = 0; j < L; ++j) {
            float got = res.mutual.data()[(h * L + i) * L + j];
            bool both = mask[i] == 1.0f && mask[j] == 1.0f;
            if (got != mask[i] * mask[j] || got != res.mutual.data()[(h * L + j) * L + i] ||
                (got == 1.0f) != both) {
              ok = false;
              break;
            }
          }
        }
    }
  report(5, "scope mutualization matches the 2^L outer-product oracle, L <= 6", ok);
}

// --- 6: relative-position clipping, exhaustive ------------------------------

void criterion_relative_positions() {
  bool ok = true;
  for (int L = 1; L <= 8 && ok; ++L)
    for (int d : {1, 2, 5})
      for (int c = 0; c < L && ok; ++c)
        for (int op = 0; op < kNumOperators && ok; ++op) {
          auto kind = static_cast<OperatorKind>(op);
          auto r = BiasPredictor::relative_positions({{c}}, 1, L, kind, d);
          for (int i = 0; i < L; ++i) {
            double raw = i - c;
            double want = kind == OperatorKind::Not
                              ? std::max(0.0, raw)
                              : std::min<double>(d, std::max<double>(-d, raw));
            if (r[i] != static_cast<float>(want)) {
              ok = false;
              break;
            }
          }
        }
  report(6, "relative-position clipping matches brute force, L <= 8, d in {1,2,5}", ok);
}

// --- 7: pretraining smoke ----------------------------------------------------

void criterion_pretrain() {
  auto start = clk::now();
  RunConfig cfg;
  CorpusParams p;
  p.num_docs = cfg.num_docs;
  p.num_queries = cfg.pretrain_examples + 200;
  p.num_attributes = cfg.num_attributes;
  Rng crng(cfg.seed);
  SyntheticCorpus corpus = generate_corpus(p, crng);

  Rng erng(cfg.seed);
  Encoder enc(cfg.encoder_config(corpus.vocab.size(), true), erng);

  // Snapshot every parameter that pretraining must leave untouched.
  ParamMap all;
  enc.register_params(all);
  std::map<std::string, std::vector<float>> frozen;
  for (auto& [name, t] : all) {
    bool trainable = name.rfind("boolattn.", 0) == 0 || name == "base.token_emb" ||
                     name == "base.pos_emb";
    if (!trainable) frozen[name] = t.data();
  }

  Rng xrng(cfg.seed + 1);
  std::vector<PretrainExample> examples = make_pretrain_examples(corpus, xrng);
  std::vector<PretrainExample> train(examples.begin(), examples.begin() + cfg.pretrain_examples);
  std::vector<PretrainExample> held(examples.begin() + cfg.pretrain_examples, examples.end());
  Rng prng(cfg.seed + 2);
  PretrainStats stats = pretrain(enc, train, held, corpus.vocab, cfg, prng);

  bool unchanged = true;
  for (auto& [name, t] : all) {
    auto it = frozen.find(name);
    if (it == frozen.end()) continue;
    if (t.data() != it->second) unchanged = false;  // bitwise float comparison
  }
  double wall = secs(start);
  bool ok = stats.cue_f1 >= 0.95 && stats.gate_accuracy >= 0.95 && unchanged && wall < 300.0;
  report(7, "pretraining smoke: cue F1 / gate accuracy >= 0.95, frozen params bitwise intact",
         ok,
         fmt("cue_f1=%.4f gate_acc=%.4f frozen=%s %.0fs", stats.cue_f1, stats.gate_accuracy,
             unchanged ? "yes" : "NO", wall));
}

// --- 10: parameter overhead ---------------------------------------------------

void criterion_overhead() {
  RunConfig cfg;
  int vocab = Vocab::boolean_vocab(cfg.num_attributes).size();
  Rng rng(0);
  Encoder enc(cfg.encoder_config(vocab, true), rng);
  std::int64_t base = enc.base_param_count();
  std::int64_t extra = enc.boolattn_param_count();
  double ratio = static_cast<double>(extra) / static_cast<double>(base);
  report(10, "boolean parameter overhead positive and below 25%", extra > 0 && ratio < 0.25,
         fmt("base=%lld extra=%lld ratio=%.4f", static_cast<long long>(base),
             static_cast<long long>(extra), ratio));
}

// --- 8 + 9 + 11: paired retrieval runs over three seeds ----------------------

struct SeedResult {
  double bool_r20 = 0.0, plain_r20 = 0.0, learned_r20 = 0.0;
  double bool_mrr_not = 0.0, plain_mrr_not = 0.0;
};

SeedResult run_seed(std::uint64_t seed, Encoder** q_out, Encoder** d_out,
                    SyntheticCorpus* corpus_out, std::vector<int>* val_out, RunConfig* cfg_out) {
  RunConfig cfg;
  cfg.seed = seed;

  // Pretraining corpus and appendix-style pretraining for the boolean model.
  CorpusParams pp;
  pp.num_docs = cfg.num_docs;
  pp.num_queries = cfg.pretrain_examples + 200;
  pp.num_attributes = cfg.num_attributes;
  Rng pcrng(seed);
  SyntheticCorpus precorpus = generate_corpus(pp, pcrng);

  CorpusParams rp;
  rp.num_docs = cfg.num_docs;
  rp.num_queries = cfg.num_queries;
  rp.num_attributes = cfg.num_attributes;
  Rng rcrng(seed + 17);
  SyntheticCorpus corpus = generate_corpus(rp, rcrng);

  int vocab = corpus.vocab.size();
  Rng e1(seed);
  auto* q_bool = new Encoder(cfg.encoder_config(vocab, true), e1);
  Rng e2(seed + 1);
  auto* d_bool = new Encoder(cfg.encoder_config(vocab, false), e2);
  Rng e3(seed);
  Encoder q_plain(cfg.encoder_config(vocab, false), e3);  // same base weights as q_bool
  Rng e4(seed + 1);
  Encoder d_plain(cfg.encoder_config(vocab, false), e4);

  Rng xrng(seed + 1);
  std::vector<PretrainExample> ex = make_pretrain_examples(precorpus, xrng);
  std::vector<PretrainExample> train(ex.begin(), ex.begin() + cfg.pretrain_examples);
  std::vector<PretrainExample> held(ex.begin() + cfg.pretrain_examples, ex.end());
  Rng prng(seed + 2);
  pretrain(*q_bool, train, held, precorpus.vocab, cfg, prng);

  Rng t1(seed + 3);
  TrainStats st_b = train_retriever(*q_bool, *d_bool, corpus, cfg, t1);
  Rng t2(seed + 3);
  TrainStats st_p = train_retriever(q_plain, d_plain, corpus, cfg, t2);

  SeedResult r;
  RetrievalMetrics mo = evaluate_retrieval(*q_bool, *d_bool, corpus, st_b.val_ids, cfg,
                                           GateMode::Oracle);
  RetrievalMetrics ml = evaluate_retrieval(*q_bool, *d_bool, corpus, st_b.val_ids, cfg,
                                           GateMode::Learned);
  RetrievalMetrics mp = evaluate_retrieval(q_plain, d_plain, corpus, st_p.val_ids, cfg,
                                           GateMode::Off);
  r.bool_r20 = mo.recall.at(20);
  r.learned_r20 = ml.recall.at(20);
  r.plain_r20 = mp.recall.at(20);
  r.bool_mrr_not = mo.mrr10_not;
  r.plain_mrr_not = mp.mrr10_not;

  if (q_out) {
    *q_out = q_bool;
    *d_out = d_bool;
    *corpus_out = corpus;
    *val_out = st_b.val_ids;
    *cfg_out = cfg;
  } else {
    delete q_bool;
    delete d_bool;
  }
  return r;
}

void criterion_retrieval_and_checkpoint() {
  auto start = clk::now();
  const std::vector<std::uint64_t> seeds = {0, 42, 1234};

  Encoder* q_keep = nullptr;
  Encoder* d_keep = nullptr;
  SyntheticCorpus corpus_keep;
  std::vector<int> val_keep;
  RunConfig cfg_keep;

  double mean_bool = 0, mean_plain = 0, mean_learned = 0, mean_mrr_b = 0, mean_mrr_p = 0;
  int non_negative = 0;
  std::string per_seed;
  for (std::uint64_t seed : seeds) {
    bool keep = seed == 0;
    SeedResult r = run_seed(seed, keep ? &q_keep : nullptr, keep ? &d_keep : nullptr,
                            keep ? &corpus_keep : nullptr, keep ? &val_keep : nullptr,
                            keep ? &cfg_keep : nullptr);
    mean_bool += r.bool_r20 / seeds.size();
    mean_plain += r.plain_r20 / seeds.size();
    mean_learned += r.learned_r20 / seeds.size();
    mean_mrr_b += r.bool_mrr_not / seeds.size();
    mean_mrr_p += r.plain_mrr_not / seeds.size();
    if (r.bool_r20 >= r.plain_r20) ++non_negative;
    per_seed += fmt("[seed %llu: R@20 %.4f vs %.4f, NOT-MRR %.4f vs %.4f] ",
                    static_cast<unsigned long long>(seed), r.bool_r20, r.plain_r20,
                    r.bool_mrr_not, r.plain_mrr_not);
  }
  double wall = secs(start);

  bool ok8 = mean_bool >= mean_plain && mean_mrr_b > mean_mrr_p && non_negative >= 2 &&
             wall < 1800.0;
  report(8, "retrieval: boolean mean R@20 >= baseline and NOT-template MRR@10 improves", ok8,
         fmt("mean R@20 %.4f vs %.4f, mean NOT-MRR %.4f vs %.4f, >=0 on %d/3 seeds, %.0fs %s",
             mean_bool, mean_plain, mean_mrr_b, mean_mrr_p, non_negative, wall,
             per_seed.c_str()));

  bool ok9 = mean_learned <= mean_bool + 0.02;
  report(9, "learned-gate mean R@20 within 0.02 of oracle (expected bottleneck)", ok9,
         fmt("learned %.4f vs oracle %.4f", mean_learned, mean_bool));

  criterion_overhead();

  // --- 11: checkpoint round-trip on the kept seed-0 model -------------------
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "boolattn_acceptance";
  fs::create_directories(dir);
  std::string path = (dir / "roundtrip.ckpt").string();

  ParamMap qp, dp;
  q_keep->register_params(qp);
  d_keep->register_params(dp);
  ParamMap all = with_prefix("query.", qp);
  ParamMap dpp = with_prefix("doc.", dp);
  all.insert(all.end(), dpp.begin(), dpp.end());
  save_checkpoint(path, all, cfg_keep.to_map());

  Rng f1(999);
  Encoder q2(cfg_keep.encoder_config(corpus_keep.vocab.size(), true), f1);
  Rng f2(998);
  Encoder d2(cfg_keep.encoder_config(corpus_keep.vocab.size(), false), f2);
  ParamMap q2p, d2p;
  q2.register_params(q2p);
  d2.register_params(d2p);
  ParamMap all2 = with_prefix("query.", q2p);
  ParamMap d2pp = with_prefix("doc.", d2p);
  all2.insert(all2.end(), d2pp.begin(), d2pp.end());
  load_into(read_checkpoint(path), all2);

  bool bits = all.size() == all2.size();
  for (std::size_t i = 0; bits && i < all.size(); ++i)
    bits = all[i].first == all2[i].first && all[i].second.data() == all2[i].second.data();

  RetrievalMetrics before =
      evaluate_retrieval(*q_keep, *d_keep, corpus_keep, val_keep, cfg_keep, GateMode::Oracle);
  RetrievalMetrics after =
      evaluate_retrieval(q2, d2, corpus_keep, val_keep, cfg_keep, GateMode::Oracle);
  bool metrics_equal = before.recall == after.recall && before.mrr10 == after.mrr10 &&
                       before.mrr10_not == after.mrr10_not &&
                       before.recall20_by_template == after.recall20_by_template;
  report(11, "checkpoint round-trip is bit-exact, downstream metrics identical",
         bits && metrics_equal, fmt("params %s, metrics %s", bits ? "exact" : "DIFFER",
                                    metrics_equal ? "identical" : "DIFFER"));
  delete q_keep;
  delete d_keep;
}

}  // namespace

int main() {
  criterion_reduction();
  criterion_negation();
  criterion_gradients();
  criterion_losses();
  criterion_scope_algebra();
  criterion_relative_positions();
  criterion_pretrain();
  criterion_retrieval_and_checkpoint();
  std::printf("%s: %d of 11 criteria failed\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
              g_failures);
  return g_failures == 0 ? 0 : 2;
}
