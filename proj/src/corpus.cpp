#include "boolattn/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace boolattn {

using nlohmann::json;

int Vocab::add(const std::string& word) {
  auto it = index.find(word);
  if (it != index.end()) return it->second;
  int id = static_cast<int>(words.size());
  words.push_back(word);
  index.emplace(word, id);
  return id;
}

int Vocab::id(const std::string& word) const {
  auto it = index.find(word);
  if (it == index.end()) throw std::out_of_range("vocab: unknown word '" + word + "'");
  return it->second;
}

Vocab Vocab::boolean_vocab(int num_attributes) {
  Vocab v;
  for (const char* w : {"[PAD]", "find", "item", "with", "and", "or", "not", "as", "well", "are",
                        "also", "including", "other", "than", "excluding"})
    v.add(w);
  for (int i = 0; i < num_attributes; ++i) v.add("attr" + std::to_string(i));
  return v;
}

std::vector<int> set_intersect(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<int> set_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<int> set_difference(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

struct TemplateDraw {
  std::string text;
  std::array<int, 3> operators{};
  std::vector<int> answers;
};

TemplateDraw render_template(int template_id, const std::vector<std::string>& attrs,
                             const std::vector<std::vector<int>>& attr_docs,
                             const std::array<int, 3>& picks) {
  const auto& A = attr_docs[picks[0]];
  const auto& B = attr_docs[picks[1]];
  const auto& C = attr_docs[picks[2]];
  const std::string a = attrs[picks[0]], b = attrs[picks[1]], c = attrs[picks[2]];
  TemplateDraw d;
  switch (template_id) {
    case 1:
      d.text = "find " + a;
      d.answers = A;
      break;
    case 2:
      d.text = "find " + a + " and " + b;
      d.operators = {1, 0, 0};
      d.answers = set_intersect(A, B);
      break;
    case 3:
      d.text = "find " + a + " or " + b;
      d.operators = {0, 1, 0};
      d.answers = set_union(A, B);
      break;
    case 4:
      d.text = "find " + a + " not " + b;
      d.operators = {0, 0, 1};
      d.answers = set_difference(A, B);
      break;
    case 5:
      d.text = "find " + a + " or " + b + " and " + c;
      d.operators = {1, 1, 0};
      d.answers = set_union(A, set_intersect(B, C));
      break;
    case 6:
      d.text = "find " + a + " and " + b + " or " + c;
      d.operators = {1, 1, 0};
      d.answers = set_union(set_intersect(A, B), C);
      break;
    case 7:
      d.text = "find " + a + " and " + b + " not " + c;
      d.operators = {1, 0, 1};
      d.answers = set_difference(set_intersect(A, B), C);
      break;
    default:
      throw std::invalid_argument("unknown template id " + std::to_string(template_id));
  }
  return d;
}

}  // namespace

SyntheticCorpus generate_corpus(const CorpusParams& params, Rng& rng) {
  if (params.num_docs < 10) throw std::invalid_argument("generate_corpus: need at least 10 docs");
  SyntheticCorpus corpus;
  corpus.vocab = Vocab::boolean_vocab(params.num_attributes);

  std::vector<std::string> attrs;
  for (int i = 0; i < params.num_attributes; ++i) attrs.push_back("attr" + std::to_string(i));

  std::vector<std::vector<int>> attr_docs(params.num_attributes);
  for (int i = 0; i < params.num_docs; ++i) {
    Document doc;
    doc.id = i;
    int n = params.min_doc_attrs + rng.uniform_int(params.max_doc_attrs - params.min_doc_attrs + 1);
    std::vector<int> chosen;
    while (static_cast<int>(chosen.size()) < n) {
      int a = rng.uniform_int(params.num_attributes);
      if (std::find(chosen.begin(), chosen.end(), a) == chosen.end()) chosen.push_back(a);
    }
    std::sort(chosen.begin(), chosen.end());
    doc.text = "item with";
    for (int a : chosen) {
      doc.attrs.push_back(attrs[a]);
      doc.text += " " + attrs[a];
      attr_docs[a].push_back(i);
    }
    corpus.docs.push_back(std::move(doc));
  }

  int qid = 0;
  int attempts = 0;
  const int max_attempts = params.num_queries * 200;
  while (static_cast<int>(corpus.queries.size()) < params.num_queries &&
         attempts < max_attempts) {
    int template_id = 1 + (qid % 7);
    bool placed = false;
    for (int retry = 0; retry < 50 && !placed; ++retry, ++attempts) {
      std::array<int, 3> picks{};
      picks[0] = rng.uniform_int(params.num_attributes);
      do { picks[1] = rng.uniform_int(params.num_attributes); } while (picks[1] == picks[0]);
      do {
        picks[2] = rng.uniform_int(params.num_attributes);
      } while (picks[2] == picks[0] || picks[2] == picks[1]);
      TemplateDraw d = render_template(template_id, attrs, attr_docs, picks);
      if (d.answers.empty()) continue;  // unsatisfiable draw, resample attributes
      Query q;
      q.id = qid;
      q.template_id = template_id;
      q.text = d.text;
      q.operators = d.operators;
      q.answer_ids = std::move(d.answers);
      corpus.queries.push_back(std::move(q));
      placed = true;
    }
    ++qid;  // bounded retries exhausted: skip this slot
  }
  return corpus;
}

std::vector<int> tokenize(const Vocab& vocab, const std::string& text, int max_len, int* out_len) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(vocab.id(w));
  }
  if (out_len) *out_len = static_cast<int>(ids.size());
  ids.resize(max_len, 0);
  return ids;
}

std::array<std::vector<int>, 3> cue_positions_for(const Vocab& vocab,
                                                  const std::vector<int>& tokens, int len) {
  static const char* and_cues[] = {"and", "as", "well", "are", "also", "including"};
  static const char* not_cues[] = {"not", "other", "than", "excluding"};
  std::array<std::vector<int>, 3> out;
  for (int i = 0; i < len; ++i) {
    const std::string& w = vocab.words[tokens[i]];
    for (const char* c : and_cues)
      if (w == c) out[0].push_back(i);
    if (w == "or") out[1].push_back(i);
    for (const char* c : not_cues)
      if (w == c) out[2].push_back(i);
  }
  return out;
}

void save_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/docs.jsonl");
    for (const auto& d : corpus.docs) {
      json j{{"id", d.id}, {"text", d.text}};
      out << j.dump() << "\n";
    }
  }
  {
    std::ofstream out(dir + "/queries.jsonl");
    for (const auto& q : corpus.queries) {
      json j{{"id", q.id},
             {"template", q.template_id},
             {"text", q.text},
             {"operators", q.operators},
             {"answer_ids", q.answer_ids}};
      out << j.dump() << "\n";
    }
  }
  {
    std::ofstream out(dir + "/vocab.txt");
    for (const auto& w : corpus.vocab.words) out << w << "\n";
  }
}

SyntheticCorpus load_corpus(const std::string& dir) {
  SyntheticCorpus corpus;
  {
    std::ifstream in(dir + "/vocab.txt");
    if (!in) throw std::runtime_error("corpus: cannot open " + dir + "/vocab.txt");
    std::string w;
    while (std::getline(in, w))
      if (!w.empty()) corpus.vocab.add(w);
  }
  {
    std::ifstream in(dir + "/docs.jsonl");
    if (!in) throw std::runtime_error("corpus: cannot open " + dir + "/docs.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      Document d;
      d.id = j.at("id").get<int>();
      d.text = j.at("text").get<std::string>();
      for (const auto& w : split_words(d.text))
        if (w.rfind("attr", 0) == 0) d.attrs.push_back(w);
      corpus.docs.push_back(std::move(d));
    }
  }
  {
    std::ifstream in(dir + "/queries.jsonl");
    if (!in) throw std::runtime_error("corpus: cannot open " + dir + "/queries.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      Query q;
      q.id = j.at("id").get<int>();
      q.template_id = j.at("template").get<int>();
      q.text = j.at("text").get<std::string>();
      auto ops = j.at("operators").get<std::vector<int>>();
      for (size_t k = 0; k < 3 && k < ops.size(); ++k) q.operators[k] = ops[k];
      q.answer_ids = j.at("answer_ids").get<std::vector<int>>();
      corpus.queries.push_back(std::move(q));
    }
  }
  return corpus;
}

}  // namespace boolattn
