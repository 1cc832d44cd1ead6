#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "forge/error.hpp"
#include "forge/metrics.hpp"

using namespace forge;
using namespace forge::metrics;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Whitespace-split reference tokenizer for inputs that contain only
// lowercase letters and spaces.
std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Straightforward BLEU-4 with the same smoothing and brevity rules, built on
// vector n-gram keys instead of the library's joined strings.
double reference_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  double match[4] = {0, 0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  double c = 0;
  double r = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    auto h = split_words(hyps[i]);
    auto g = split_words(refs[i]);
    c += h.size();
    r += g.size();
    for (int n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, int> hc;
      std::map<std::vector<std::string>, int> gc;
      for (std::size_t k = 0; k + n <= h.size(); ++k) ++hc[{h.begin() + k, h.begin() + k + n}];
      for (std::size_t k = 0; k + n <= g.size(); ++k) ++gc[{g.begin() + k, g.begin() + k + n}];
      for (auto& [gram, cnt] : hc) {
        total[n - 1] += cnt;
        if (gc.count(gram)) match[n - 1] += std::min(cnt, gc[gram]);
      }
    }
  }
  double logp = 0;
  for (int n = 0; n < 4; ++n) logp += std::log(match[n] > 0 ? match[n] / total[n] : (match[n] + 1) / (total[n] + 1));
  double bp = c < r ? std::exp(1 - r / c) : 1.0;
  return 100.0 * bp * std::exp(logp / 4);
}

std::string random_sentence(std::mt19937_64& rng, int min_len, int max_len) {
  static const char* words[] = {"the", "cat", "sat", "on", "mat", "a", "dog", "ran", "far", "away"};
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<int> pick(0, 9);
  std::string s;
  int n = len(rng);
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += words[pick(rng)];
  }
  return s;
}

}  // namespace

TEST_CASE("tokenize splits on non-alphanumerics and folds case") {
  CHECK(tokenize("The cat's mat.") == std::vector<std::string>{"the", "cat", "s", "mat"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("ABC abc") == std::vector<std::string>{"abc", "abc"});
  TokenizerConfig keep;
  keep.lowercase = false;
  CHECK(tokenize("ABC abc", keep) == std::vector<std::string>{"ABC", "abc"});
  CHECK(tokenize("naïve café") == std::vector<std::string>{"naïve", "café"});
}

TEST_CASE("stopword removal needs a list") {
  TokenizerConfig cfg;
  cfg.drop_stopwords = true;
  CHECK_THROWS_AS(tokenize("a b", cfg), Error);
  cfg.stopwords = std::set<std::string>{"the", "a"};
  CHECK(tokenize("The cat a mat", cfg) == std::vector<std::string>{"cat", "mat"});
}

TEST_CASE("k_precision oracles") {
  const std::string knowledge = "the cat sat on the mat";
  CHECK(k_precision("the cat sat on the mat", knowledge) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(k_precision("dogs bark loudly", knowledge) == doctest::Approx(0.0));
  CHECK(std::abs(k_precision("A cat sat there.", knowledge) - 0.5) < 1e-9);
  // Occurrences count individually: {cat, cat, dog} -> 2/3.
  CHECK(std::abs(k_precision("cat cat dog", knowledge) - 2.0 / 3.0) < 1e-12);
  CHECK_THROWS_AS(k_precision("...", knowledge), Error);
}

TEST_CASE("knowledge index reuses one token set") {
  KnowledgeIndex idx("Sparse attention improves accuracy");
  CHECK(idx.contains("sparse"));
  CHECK_FALSE(idx.contains("Sparse"));
  CHECK(idx.precision("sparse attention") == doctest::Approx(1.0));
  CHECK(idx.precision("dense attention") == doctest::Approx(0.5));
}

TEST_CASE("specificity matches the logistic formula by hand") {
  // "it is it": 3 tokens, no numerals, long or capitalized tokens.
  CHECK(std::abs(specificity("it is it") - logistic(-1.5 + 2.5 * (3.0 / 40.0))) < 1e-12);
  // "It is good.": sentence-initial capital does not count.
  CHECK(std::abs(specificity("It is good.") - logistic(-1.5 + 2.5 * (3.0 / 40.0))) < 1e-12);

  auto f = specificity_features("The model achieves 92.4 F1 on CoNLL-2003.");
  // tokens: The model achieves 92 4 F1 on CoNLL 2003 -> 9 tokens
  CHECK(f.numeral == doctest::Approx(3.0 / 9.0));
  CHECK(f.long_token == doctest::Approx(1.0 / 9.0));  // "achieves"
  CHECK(f.capitalized == doctest::Approx(2.0 / 9.0));  // F1, CoNLL
  CHECK(f.length == doctest::Approx(9.0 / 40.0));
  CHECK(specificity("The model achieves 92.4 F1 on CoNLL-2003.") > specificity("It is good."));
}

TEST_CASE("specificity is monotone in added numerals") {
  CHECK(specificity("the results improve by 12 points") >= specificity("the results improve by several points"));
  CHECK(specificity("the results improve by 12 points 2024") >= specificity("the results improve by 12 points"));
  CHECK_THROWS_AS(specificity("?!"), Error);
}

TEST_CASE("specificity length feature saturates at 40 tokens") {
  std::string s;
  for (int i = 0; i < 50; ++i) s += "word ";
  CHECK(specificity_features(s).length == doctest::Approx(1.0));
}

TEST_CASE("distinct n-grams by hand enumeration") {
  CHECK(distinct_ngrams({"the cat sat", "the cat ran"}, 2) == 3);
  CHECK(distinct_ngrams({"the cat"}, 3) == 0);
  CHECK(distinct_ngrams({"a a a"}, 1) == 1);
  CHECK(distinct_ngrams({"a b", "b a"}, 2) == 2);  // no window spans two utterances
  CHECK(total_ngrams({"the cat sat", "the cat ran"}, 2) == 4);
  CHECK_THROWS_AS(distinct_ngrams({"a"}, 0), Error);
}

TEST_CASE("distinct n-grams agree with a set-of-vectors count") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> utts;
    int count = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < count; ++i) utts.push_back(random_sentence(rng, 0, 8));
    for (int n = 1; n <= 4; ++n) {
      std::set<std::vector<std::string>> grams;
      for (const auto& u : utts) {
        auto w = split_words(u);
        for (std::size_t k = 0; k + n <= w.size(); ++k) grams.insert({w.begin() + k, w.begin() + k + n});
      }
      REQUIRE(distinct_ngrams(utts, n) == grams.size());
    }
  }
}

TEST_CASE("corpus BLEU oracles") {
  CHECK(corpus_bleu({"the cat sat on the mat"}, {"the cat sat on the mat"}) == doctest::Approx(100.0));
  // Unigram 2/2, bigram 1/1, trigram and 4-gram smoothed to 1/1; BP = exp(1 - 3/2).
  CHECK(std::abs(corpus_bleu({"the cat"}, {"the cat sat"}) - 100.0 * std::exp(-0.5)) < 1e-9);
  CHECK(std::abs(corpus_bleu({"the cat"}, {"the cat sat"}) - 60.65) < 0.01);
  CHECK_THROWS_AS(corpus_bleu({""}, {"x"}), Error);
  CHECK_THROWS_AS(corpus_bleu({"a"}, {}), Error);
  CHECK_THROWS_AS(corpus_bleu({}, {}), Error);
}

TEST_CASE("corpus BLEU clips repeated n-grams") {
  auto s = bleu_stats({"the the the"}, {"the cat"});
  CHECK(s.matches[0] == 1);
  CHECK(s.totals[0] == 3);
}

TEST_CASE("corpus BLEU agrees with an independent implementation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> hyps;
    std::vector<std::string> refs;
    int pairs = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < pairs; ++i) {
      hyps.push_back(random_sentence(rng, 1, 9));
      refs.push_back(random_sentence(rng, 0, 9));
    }
    double got = corpus_bleu(hyps, refs);
    REQUIRE(got == doctest::Approx(reference_bleu(hyps, refs)).epsilon(1e-12));
    REQUIRE(got >= 0.0);
    REQUIRE(got <= 100.0 + 1e-9);
  }
}

TEST_CASE("aggregate_dialogue restricts groundedness to agent turns") {
  Dialogue d;
  RewardVector seeker;
  seeker.k_prec = 0.1;
  seeker.specificity = 0.4;
  RewardVector agent;
  agent.k_prec = 0.8;
  agent.specificity = 0.6;
  d.utterances = {{Role::seeker, "q", seeker}, {Role::agent, "a", agent}};
  auto agg = aggregate_dialogue(d);
  CHECK(*agg.agent_means.k_prec == doctest::Approx(0.8));
  CHECK(*agg.specificity_mean == doctest::Approx(0.5));
  CHECK_FALSE(agg.agent_means.q2_f1);
}

TEST_CASE("aggregate_dialogue names the utterance missing a metric") {
  Dialogue d;
  RewardVector with;
  with.q2_f1 = 0.3;
  d.utterances = {{Role::seeker, "q", std::nullopt},
                  {Role::agent, "a", with},
                  {Role::seeker, "q2", std::nullopt},
                  {Role::agent, "b", RewardVector{}}};
  try {
    aggregate_dialogue(d);
    FAIL("expected missing_rewards");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::missing_rewards);
    CHECK(std::string(e.what()).find("utterance 3") != std::string::npos);
  }
}
