// Command-line front end: corpus generation, pretraining, dual-encoder
// fine-tuning, evaluation, gradient verification and parameter accounting.
//
// Exit codes: 0 success, 1 usage error, 2 failed check.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "boolattn/checkpoint.hpp"
#include "boolattn/gradcheck.hpp"
#include "boolattn/pretrain.hpp"
#include "boolattn/retrieval.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace boolattn;

namespace {

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point start) {
  return std::chrono::duration<double>(clk::now() - start).count();
}

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string seeds_csv;
  std::string out_dir = "out";
  std::string checkpoint;
  std::string gate_mode = "oracle";
  std::string boolattn = "on";
};

RunConfig resolve_config(const CliOptions& opt, std::uint64_t seed) {
  RunConfig cfg;
  if (!opt.config_path.empty()) cfg.load_file(opt.config_path);
  cfg.apply_overrides(opt.overrides);
  cfg.seed = seed;
  return cfg;
}

std::vector<std::uint64_t> resolve_seeds(const CliOptions& opt) {
  if (opt.seeds_csv.empty()) return {opt.seed_set ? opt.seed : std::uint64_t{0}};
  std::vector<std::uint64_t> seeds;
  std::string item;
  std::istringstream in(opt.seeds_csv);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
  return seeds;
}

GateMode resolve_gate_mode(const CliOptions& opt) {
  if (opt.boolattn == "off") return GateMode::Off;
  return opt.gate_mode == "learned" ? GateMode::Learned : GateMode::Oracle;
}

// The corpora are regenerated deterministically from (config, seed), so
// generate/pretrain/train/eval agree on the data without passing files
// around. The retrieval corpus uses a shifted stream so its attribute draws
// are independent of the pretraining queries.
SyntheticCorpus pretrain_corpus(const RunConfig& cfg) {
  CorpusParams p;
  p.num_docs = cfg.num_docs;
  p.num_queries = cfg.pretrain_examples + 200;
  p.num_attributes = cfg.num_attributes;
  p.min_doc_attrs = cfg.min_doc_attrs;
  p.max_doc_attrs = cfg.max_doc_attrs;
  Rng rng(cfg.seed);
  return generate_corpus(p, rng);
}

SyntheticCorpus retrieval_corpus(const RunConfig& cfg) {
  CorpusParams p;
  p.num_docs = cfg.num_docs;
  p.num_queries = cfg.num_queries;
  p.num_attributes = cfg.num_attributes;
  p.min_doc_attrs = cfg.min_doc_attrs;
  p.max_doc_attrs = cfg.max_doc_attrs;
  Rng rng(cfg.seed + 17);
  return generate_corpus(p, rng);
}

struct EncoderPair {
  Encoder query;
  Encoder doc;
};

EncoderPair make_encoders(const RunConfig& cfg, int vocab_size, bool use_boolattn) {
  Rng qrng(cfg.seed);
  Rng drng(cfg.seed + 1);
  return {Encoder(cfg.encoder_config(vocab_size, use_boolattn), qrng),
          Encoder(cfg.encoder_config(vocab_size, false), drng)};
}

ParamMap pair_params(EncoderPair& pair) {
  ParamMap q, d;
  pair.query.register_params(q);
  pair.doc.register_params(d);
  ParamMap all = with_prefix("query.", q);
  ParamMap dd = with_prefix("doc.", d);
  all.insert(all.end(), dd.begin(), dd.end());
  return all;
}

void save_pair(const std::string& path, EncoderPair& pair, const RunConfig& cfg) {
  save_checkpoint(path, pair_params(pair), cfg.to_map());
}

void load_pair(const std::string& path, EncoderPair& pair) {
  RawCheckpoint raw = read_checkpoint(path);
  ParamMap all = pair_params(pair);
  load_into(raw, all);
}

void append_jsonl(const std::string& out_dir, const json& record) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "report.jsonl", std::ios::app);
  out << record.dump() << "\n";
}

json config_json(const RunConfig& cfg) {
  json j;
  for (const auto& [k, v] : cfg.to_map()) j[k] = v;
  return j;
}

json metrics_json(const RetrievalMetrics& m) {
  json j;
  for (const auto& [k, v] : m.recall) j["recall@" + std::to_string(k)] = v;
  j["mrr@10"] = m.mrr10;
  j["mrr@10_not"] = m.mrr10_not;
  j["num_queries"] = m.num_queries;
  j["num_not_queries"] = m.num_not_queries;
  json per_template;
  for (const auto& [t, v] : m.recall20_by_template)
    per_template[std::to_string(t)] = {{"recall@20", v}, {"mrr@10", m.mrr10_by_template.at(t)}};
  j["by_template"] = per_template;
  return j;
}

void print_metrics(const RetrievalMetrics& m) {
  std::printf("  %-12s %8s\n", "metric", "value");
  for (const auto& [k, v] : m.recall) std::printf("  recall@%-5d %8.4f\n", k, v);
  std::printf("  %-12s %8.4f\n", "mrr@10", m.mrr10);
  std::printf("  %-12s %8.4f  (%d queries)\n", "mrr@10 (NOT)", m.mrr10_not, m.num_not_queries);
  std::printf("  per-template recall@20 / mrr@10:\n");
  for (const auto& [t, v] : m.recall20_by_template)
    std::printf("    template %d: %6.4f / %6.4f\n", t, v, m.mrr10_by_template.at(t));
}

int cmd_generate(const CliOptions& opt) {
  RunConfig cfg = resolve_config(opt, resolve_seeds(opt).front());
  SyntheticCorpus corpus = retrieval_corpus(cfg);
  fs::create_directories(opt.out_dir);
  save_corpus(corpus, opt.out_dir);
  std::printf("generate: %zu docs, %zu queries, vocab %d -> %s\n", corpus.docs.size(),
              corpus.queries.size(), corpus.vocab.size(), opt.out_dir.c_str());
  append_jsonl(opt.out_dir, {{"cmd", "generate"},
                             {"seed", cfg.seed},
                             {"docs", corpus.docs.size()},
                             {"queries", corpus.queries.size()},
                             {"config", config_json(cfg)}});
  return 0;
}

int cmd_pretrain(const CliOptions& opt) {
  auto start = clk::now();
  RunConfig cfg = resolve_config(opt, resolve_seeds(opt).front());
  SyntheticCorpus corpus = pretrain_corpus(cfg);
  EncoderPair pair = make_encoders(cfg, corpus.vocab.size(), opt.boolattn != "off");

  Rng ex_rng(cfg.seed + 1);
  std::vector<PretrainExample> examples = make_pretrain_examples(corpus, ex_rng);
  if (static_cast<int>(examples.size()) < cfg.pretrain_examples + 1)
    throw std::runtime_error("pretraining corpus too small for pretrain_examples");
  std::vector<PretrainExample> train(examples.begin(), examples.begin() + cfg.pretrain_examples);
  std::vector<PretrainExample> held(examples.begin() + cfg.pretrain_examples, examples.end());

  Rng rng(cfg.seed + 2);
  PretrainStats stats = pretrain(pair.query, train, held, corpus.vocab, cfg, rng);

  fs::create_directories(opt.out_dir);
  std::string ckpt = opt.checkpoint.empty()
                         ? (fs::path(opt.out_dir) / "pretrained.ckpt").string()
                         : opt.checkpoint;
  save_pair(ckpt, pair, cfg);

  double wall = seconds_since(start);
  std::printf("pretrain: steps=%d early_loss=%.4f late_loss=%.4f\n", stats.steps,
              stats.early_loss, stats.late_loss);
  std::printf("pretrain: held-out cue F1=%.4f gate accuracy=%.4f (%.1fs) -> %s\n", stats.cue_f1,
              stats.gate_accuracy, wall, ckpt.c_str());
  append_jsonl(opt.out_dir, {{"cmd", "pretrain"},
                             {"seed", cfg.seed},
                             {"steps", stats.steps},
                             {"early_loss", stats.early_loss},
                             {"late_loss", stats.late_loss},
                             {"cue_f1", stats.cue_f1},
                             {"gate_accuracy", stats.gate_accuracy},
                             {"checkpoint", ckpt},
                             {"wall_seconds", wall},
                             {"config", config_json(cfg)}});
  return 0;
}

int cmd_train(const CliOptions& opt) {
  auto start = clk::now();
  std::vector<std::uint64_t> seeds = resolve_seeds(opt);
  bool use_bool = opt.boolattn != "off";
  GateMode eval_mode = resolve_gate_mode(opt);

  double sum_r20 = 0.0, sum_mrr_not = 0.0;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = resolve_config(opt, seed);
    SyntheticCorpus corpus = retrieval_corpus(cfg);
    EncoderPair pair = make_encoders(cfg, corpus.vocab.size(), use_bool);
    if (!opt.checkpoint.empty()) load_pair(opt.checkpoint, pair);

    Rng rng(cfg.seed + 3);
    TrainStats stats = train_retriever(pair.query, pair.doc, corpus, cfg, rng);
    RetrievalMetrics metrics =
        evaluate_retrieval(pair.query, pair.doc, corpus, stats.val_ids, cfg, eval_mode);

    fs::create_directories(opt.out_dir);
    std::string ckpt =
        (fs::path(opt.out_dir) / ("trained_seed" + std::to_string(seed) + ".ckpt")).string();
    save_pair(ckpt, pair, cfg);

    std::printf("train seed %llu: epochs=%d final_loss=%.4f best_val_recall@20=%.4f -> %s\n",
                static_cast<unsigned long long>(seed), stats.epochs, stats.final_train_loss,
                stats.best_val_recall20, ckpt.c_str());
    print_metrics(metrics);
    sum_r20 += metrics.recall.at(20);
    sum_mrr_not += metrics.mrr10_not;
    append_jsonl(opt.out_dir, {{"cmd", "train"},
                               {"seed", seed},
                               {"epochs", stats.epochs},
                               {"final_train_loss", stats.final_train_loss},
                               {"best_val_recall@20", stats.best_val_recall20},
                               {"metrics", metrics_json(metrics)},
                               {"checkpoint", ckpt},
                               {"gate_mode", opt.boolattn == "off" ? "off" : opt.gate_mode},
                               {"config", config_json(cfg)}});
  }
  double n = static_cast<double>(seeds.size());
  std::printf("train: mean over %zu seed(s): recall@20=%.4f mrr@10(NOT)=%.4f (%.1fs)\n",
              seeds.size(), sum_r20 / n, sum_mrr_not / n, seconds_since(start));
  return 0;
}

int cmd_eval(const CliOptions& opt) {
  if (opt.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "eval needs a checkpoint");
  RunConfig cfg = resolve_config(opt, resolve_seeds(opt).front());
  SyntheticCorpus corpus = retrieval_corpus(cfg);
  EncoderPair pair = make_encoders(cfg, corpus.vocab.size(), opt.boolattn != "off");
  load_pair(opt.checkpoint, pair);

  std::vector<int> all_ids(corpus.queries.size());
  for (std::size_t i = 0; i < all_ids.size(); ++i) all_ids[i] = static_cast<int>(i);
  RetrievalMetrics metrics =
      evaluate_retrieval(pair.query, pair.doc, corpus, all_ids, cfg, resolve_gate_mode(opt));

  std::printf("eval: %s over %zu queries (gate mode %s)\n", opt.checkpoint.c_str(), all_ids.size(),
              opt.boolattn == "off" ? "off" : opt.gate_mode.c_str());
  print_metrics(metrics);
  append_jsonl(opt.out_dir, {{"cmd", "eval"},
                             {"seed", cfg.seed},
                             {"checkpoint", opt.checkpoint},
                             {"gate_mode", opt.boolattn == "off" ? "off" : opt.gate_mode},
                             {"metrics", metrics_json(metrics)},
                             {"config", config_json(cfg)}});
  return 0;
}

int cmd_gradcheck(const CliOptions& opt) {
  RunConfig cfg = resolve_config(opt, resolve_seeds(opt).front());
  GradCheckReport report = run_gradcheck(cfg.seed);
  for (const GradCheckEntry& e : report.entries) {
    if (!e.pass)
      std::printf("  FAIL %-28s idx %-5lld analytic=% .6e numeric=% .6e\n", e.param.c_str(),
                  static_cast<long long>(e.index), e.analytic, e.numeric);
  }
  std::printf("gradcheck: %d checks, %d failed\n", report.checked, report.failed);
  append_jsonl(opt.out_dir, {{"cmd", "gradcheck"},
                             {"seed", cfg.seed},
                             {"checked", report.checked},
                             {"failed", report.failed}});
  return report.all_pass ? 0 : 2;
}

int cmd_params(const CliOptions& opt) {
  RunConfig cfg = resolve_config(opt, resolve_seeds(opt).front());
  int vocab = Vocab::boolean_vocab(cfg.num_attributes).size();
  Rng rng(cfg.seed);
  Encoder enc(cfg.encoder_config(vocab, true), rng);
  std::int64_t base = enc.base_param_count();
  std::int64_t extra = enc.boolattn_param_count();
  double ratio = static_cast<double>(extra) / static_cast<double>(base);
  std::printf("params: base=%lld boolattn=%lld overhead=%.2f%%\n",
              static_cast<long long>(base), static_cast<long long>(extra), 100.0 * ratio);
  append_jsonl(opt.out_dir, {{"cmd", "params"},
                             {"base", base},
                             {"boolattn", extra},
                             {"overhead_fraction", ratio},
                             {"config", config_json(cfg)}});
  return (extra > 0 && ratio < 0.25) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boolean-aware attention retriever: desk-scale training and evaluation"};
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path, "key=value config file");
  app.add_option("--set", opt.overrides, "inline override, key=value (repeatable)");
  auto* seed_opt = app.add_option("--seed", opt.seed, "run seed (default 0)");
  app.add_option("--seeds", opt.seeds_csv, "comma-separated seed list");
  app.add_option("--out", opt.out_dir, "output directory (default ./out)");
  app.add_option("--checkpoint", opt.checkpoint, "checkpoint path to load or save");
  app.add_option("--gate-mode", opt.gate_mode, "oracle|learned")
      ->check(CLI::IsMember({"oracle", "learned"}));
  app.add_option("--boolattn", opt.boolattn, "on|off")->check(CLI::IsMember({"on", "off"}));

  auto* generate = app.add_subcommand("generate", "write the synthetic corpus to --out");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "cue/gate/triplet pretraining");
  auto* train = app.add_subcommand("train", "dual-encoder contrastive fine-tuning");
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the corpus");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  auto* params = app.add_subcommand("params", "parameter counts, base vs boolattn");
  for (CLI::App* sub : {generate, pretrain_cmd, train, eval_cmd, gradcheck, params})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
    opt.seed_set = seed_opt->count() > 0;
    if (generate->parsed()) return cmd_generate(opt);
    if (pretrain_cmd->parsed()) return cmd_pretrain(opt);
    if (train->parsed()) return cmd_train(opt);
    if (eval_cmd->parsed()) return cmd_eval(opt);
    if (gradcheck->parsed()) return cmd_gradcheck(opt);
    if (params->parsed()) return cmd_params(opt);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
