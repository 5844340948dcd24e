#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "boolattn/corpus.hpp"

using namespace boolattn;

namespace {

std::vector<std::string> attr_words(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string w;
  while (ss >> w)
    if (w.rfind("attr", 0) == 0) out.push_back(w);
  return out;
}

SyntheticCorpus small_corpus(std::uint64_t seed = 0) {
  CorpusParams p;
  p.num_docs = 80;
  p.num_queries = 70;
  p.num_attributes = 12;
  Rng rng(seed);
  return generate_corpus(p, rng);
}

}  // namespace

TEST_CASE("set algebra primitives") {
  std::vector<int> a = {1, 3, 5, 7}, b = {3, 4, 7, 9};
  CHECK(set_intersect(a, b) == std::vector<int>({3, 7}));
  CHECK(set_union(a, b) == std::vector<int>({1, 3, 4, 5, 7, 9}));
  CHECK(set_difference(a, b) == std::vector<int>({1, 5}));
}

TEST_CASE("De Morgan consistency over a finite universe") {
  std::vector<int> u;
  for (int i = 0; i < 20; ++i) u.push_back(i);
  std::vector<int> a = {1, 2, 5, 8, 13}, b = {2, 3, 8, 14};
  auto lhs = set_difference(u, set_intersect(a, b));
  auto rhs = set_union(set_difference(u, a), set_difference(u, b));
  CHECK(lhs == rhs);
}

TEST_CASE("generated answer sets follow the template set semantics exactly") {
  SyntheticCorpus corpus = small_corpus();
  REQUIRE(!corpus.queries.empty());

  // Rebuild attribute -> doc-id postings independently.
  std::map<std::string, std::vector<int>> postings;
  for (const auto& d : corpus.docs)
    for (const auto& a : attr_words(d.text)) postings[a].push_back(d.id);

  std::set<int> seen_templates;
  for (const auto& q : corpus.queries) {
    auto ops = attr_words(q.text);
    auto S = [&](int i) { return postings[ops[i]]; };
    std::vector<int> want;
    switch (q.template_id) {
      case 1: want = S(0); break;
      case 2: want = set_intersect(S(0), S(1)); break;
      case 3: want = set_union(S(0), S(1)); break;
      case 4: want = set_difference(S(0), S(1)); break;
      case 5: want = set_union(S(0), set_intersect(S(1), S(2))); break;
      case 6: want = set_union(set_intersect(S(0), S(1)), S(2)); break;
      case 7: want = set_difference(set_intersect(S(0), S(1)), S(2)); break;
      default: FAIL("unexpected template id " << q.template_id);
    }
    REQUIRE(!q.answer_ids.empty());
    CHECK(q.answer_ids == want);
    seen_templates.insert(q.template_id);
  }
  CHECK(seen_templates.size() == 7);  // round-robin covers all templates
}

TEST_CASE("operator labels match the templates") {
  SyntheticCorpus corpus = small_corpus(1);
  for (const auto& q : corpus.queries) {
    std::array<int, 3> want{};
    switch (q.template_id) {
      case 2: want = {1, 0, 0}; break;
      case 3: want = {0, 1, 0}; break;
      case 4: want = {0, 0, 1}; break;
      case 5:
      case 6: want = {1, 1, 0}; break;
      case 7: want = {1, 0, 1}; break;
      default: break;
    }
    CHECK(q.operators == want);
  }
}

TEST_CASE("tokenize pads, truncates and reports the true length") {
  Vocab v = Vocab::boolean_vocab(4);
  int len = 0;
  auto ids = tokenize(v, "find attr1 and attr2", 8, &len);
  REQUIRE(ids.size() == 8);
  CHECK(len == 4);
  CHECK(ids[0] == v.id("find"));
  CHECK(ids[2] == v.id("and"));
  for (int i = 4; i < 8; ++i) CHECK(ids[i] == 0);
  auto trunc = tokenize(v, "find attr1 and attr2", 2, &len);
  CHECK(len == 2);
  CHECK(int(trunc.size()) == 2);
}

TEST_CASE("cue positions cover single-token and multi-token synonyms") {
  Vocab v = Vocab::boolean_vocab(4);
  int len = 0;
  auto ids = tokenize(v, "find attr1 as well as attr2 excluding attr3", 16, &len);
  auto pos = cue_positions_for(v, ids, len);
  CHECK(pos[0] == std::vector<int>({2, 3, 4}));  // "as well as" -> AND
  CHECK(pos[1].empty());
  CHECK(pos[2] == std::vector<int>({6}));  // "excluding" -> NOT
  auto ids2 = tokenize(v, "find attr0 or attr1 other than attr2", 16, &len);
  auto pos2 = cue_positions_for(v, ids2, len);
  CHECK(pos2[1] == std::vector<int>({2}));
  CHECK(pos2[2] == std::vector<int>({4, 5}));
}

TEST_CASE("corpus persists and reloads losslessly") {
  SyntheticCorpus corpus = small_corpus(2);
  std::string dir = (std::filesystem::temp_directory_path() / "boolattn_corpus_test").string();
  std::filesystem::create_directories(dir);
  save_corpus(corpus, dir);
  SyntheticCorpus back = load_corpus(dir);

  REQUIRE(back.docs.size() == corpus.docs.size());
  REQUIRE(back.queries.size() == corpus.queries.size());
  REQUIRE(back.vocab.words == corpus.vocab.words);
  for (size_t i = 0; i < corpus.docs.size(); ++i) {
    CHECK(back.docs[i].id == corpus.docs[i].id);
    CHECK(back.docs[i].text == corpus.docs[i].text);
  }
  for (size_t i = 0; i < corpus.queries.size(); ++i) {
    CHECK(back.queries[i].text == corpus.queries[i].text);
    CHECK(back.queries[i].template_id == corpus.queries[i].template_id);
    CHECK(back.queries[i].operators == corpus.queries[i].operators);
    CHECK(back.queries[i].answer_ids == corpus.queries[i].answer_ids);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("generation is deterministic per seed") {
  SyntheticCorpus a = small_corpus(7), b = small_corpus(7), c = small_corpus(8);
  REQUIRE(a.queries.size() == b.queries.size());
  for (size_t i = 0; i < a.queries.size(); ++i) CHECK(a.queries[i].text == b.queries[i].text);
  bool any_diff = a.queries.size() != c.queries.size();
  for (size_t i = 0; !any_diff && i < a.queries.size(); ++i)
    any_diff = a.queries[i].text != c.queries[i].text;
  CHECK(any_diff);
}

TEST_CASE("positive resampling draws at least two distinct positives") {
  SyntheticCorpus corpus = small_corpus(3);
  const Query* multi = nullptr;
  for (const auto& q : corpus.queries)
    if (q.answer_ids.size() >= 3) {
      multi = &q;
      break;
    }
  REQUIRE(multi != nullptr);
  Rng rng(0);
  std::set<int> drawn;
  for (size_t step = 0; step < multi->answer_ids.size() + 5; ++step)
    drawn.insert(multi->answer_ids[rng.uniform_int(int(multi->answer_ids.size()))]);
  CHECK(drawn.size() >= 2);
}
