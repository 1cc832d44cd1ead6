#include "forge/metrics.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

#include "forge/error.hpp"

namespace forge::metrics {

namespace {

bool is_token_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

struct Span {
  std::size_t begin;
  std::size_t end;
};

std::vector<Span> token_spans(std::string_view text) {
  std::vector<Span> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_token_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_token_byte(static_cast<unsigned char>(text[j]))) ++j;
    spans.push_back({i, j});
    i = j;
  }
  return spans;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string ngram_key(const std::vector<std::string>& tokens, std::size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k > 0) key.push_back('\x1f');
    key += tokens[start + static_cast<std::size_t>(k)];
  }
  return key;
}

std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::string, std::size_t> counts;
  if (tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) ++counts[ngram_key(tokens, i, n)];
  return counts;
}

void require_order(int n) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "n-gram order must be >= 1, got " + std::to_string(n));
}

}  // namespace

void TokenizerConfig::validate() const {
  if (drop_stopwords && !stopwords) {
    throw Error(ErrorKind::validation, "drop_stopwords requires a stopword list");
  }
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
  cfg.validate();
  std::vector<std::string> tokens;
  for (auto span : token_spans(text)) {
    std::string tok(text.substr(span.begin, span.end - span.begin));
    if (cfg.lowercase) {
      for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (cfg.drop_stopwords && cfg.stopwords->count(tok)) continue;
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

KnowledgeIndex::KnowledgeIndex(std::string_view knowledge, TokenizerConfig cfg) : cfg_(std::move(cfg)) {
  for (auto& tok : tokenize(knowledge, cfg_)) tokens_.insert(std::move(tok));
}

double KnowledgeIndex::precision(std::string_view utterance) const {
  auto tokens = tokenize(utterance, cfg_);
  if (tokens.empty()) throw Error(ErrorKind::invalid_argument, "utterance has no tokens");
  std::size_t hits = 0;
  for (const auto& tok : tokens) hits += tokens_.count(tok);
  return static_cast<double>(hits) / static_cast<double>(tokens.size());
}

double k_precision(std::string_view utterance, std::string_view knowledge, const TokenizerConfig& cfg) {
  return KnowledgeIndex(knowledge, cfg).precision(utterance);
}

SpecificityFeatures specificity_features(std::string_view utterance) {
  auto spans = token_spans(utterance);
  if (spans.empty()) throw Error(ErrorKind::invalid_argument, "utterance has no tokens");

  std::size_t numerals = 0;
  std::size_t longs = 0;
  std::size_t capitals = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    auto tok = utterance.substr(spans[i].begin, spans[i].end - spans[i].begin);
    bool all_digits = true;
    for (char c : tok) all_digits = all_digits && std::isdigit(static_cast<unsigned char>(c));
    if (all_digits) ++numerals;
    if (utf8_length(tok) >= kLongTokenChars) ++longs;

    bool sentence_initial = true;
    for (std::size_t p = spans[i].begin; p > 0; --p) {
      char prev = utterance[p - 1];
      if (std::isspace(static_cast<unsigned char>(prev))) continue;
      sentence_initial = prev == '.' || prev == '!' || prev == '?';
      break;
    }
    if (!sentence_initial && std::isupper(static_cast<unsigned char>(tok.front()))) ++capitals;
  }

  double n = static_cast<double>(spans.size());
  SpecificityFeatures f;
  f.numeral = numerals / n;
  f.long_token = longs / n;
  f.capitalized = capitals / n;
  f.length = std::min(n / kLengthNormalizer, 1.0);
  return f;
}

double specificity_from_features(const SpecificityFeatures& f, const SpecificityWeights& w) {
  double z = w.bias + w.numeral * f.numeral + w.long_token * f.long_token + w.capitalized * f.capitalized +
             w.length * f.length;
  return 1.0 / (1.0 + std::exp(-z));
}

double specificity(std::string_view utterance, const SpecificityWeights& w) {
  return specificity_from_features(specificity_features(utterance), w);
}

std::size_t distinct_ngrams(const std::vector<std::string>& utterances, int n, const TokenizerConfig& cfg) {
  require_order(n);
  std::unordered_set<std::string> seen;
  for (const auto& u : utterances) {
    auto tokens = tokenize(u, cfg);
    if (tokens.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) seen.insert(ngram_key(tokens, i, n));
  }
  return seen.size();
}

std::size_t total_ngrams(const std::vector<std::string>& utterances, int n, const TokenizerConfig& cfg) {
  require_order(n);
  std::size_t total = 0;
  for (const auto& u : utterances) {
    auto len = tokenize(u, cfg).size();
    if (len >= static_cast<std::size_t>(n)) total += len - static_cast<std::size_t>(n) + 1;
  }
  return total;
}

BleuStats bleu_stats(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                     const TokenizerConfig& cfg) {
  if (hypotheses.size() != references.size()) {
    throw Error(ErrorKind::invalid_argument, "BLEU needs one reference per hypothesis (" +
                                                 std::to_string(hypotheses.size()) + " vs " +
                                                 std::to_string(references.size()) + ")");
  }
  if (hypotheses.empty()) throw Error(ErrorKind::invalid_argument, "BLEU needs at least one pair");

  BleuStats stats;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    auto hyp = tokenize(hypotheses[i], cfg);
    if (hyp.empty()) throw Error(ErrorKind::invalid_argument, "hypothesis " + std::to_string(i) + " is empty");
    auto ref = tokenize(references[i], cfg);
    stats.hypothesis_length += hyp.size();
    stats.reference_length += ref.size();
    for (int n = 1; n <= kBleuOrder; ++n) {
      auto hyp_counts = ngram_counts(hyp, n);
      auto ref_counts = ngram_counts(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) stats.matches[n - 1] += std::min(count, it->second);
        stats.totals[n - 1] += count;
      }
    }
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats) {
  double log_sum = 0.0;
  for (int n = 0; n < kBleuOrder; ++n) {
    double m = static_cast<double>(stats.matches[n]);
    double t = static_cast<double>(stats.totals[n]);
    double p = stats.matches[n] == 0 ? (m + 1.0) / (t + 1.0) : m / t;
    log_sum += std::log(p);
  }
  double c = static_cast<double>(stats.hypothesis_length);
  double r = static_cast<double>(stats.reference_length);
  double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / kBleuOrder);
}

double corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                   const TokenizerConfig& cfg) {
  return bleu_from_stats(bleu_stats(hypotheses, references, cfg));
}

DialogueAggregate aggregate_dialogue(const Dialogue& d) {
  auto mean_over = [&d](Metric m, bool agents_only) -> std::optional<double> {
    bool any = false;
    for (const auto& u : d.utterances) {
      if (agents_only && u.role != Role::agent) continue;
      any = any || (u.rewards && u.rewards->get(m));
    }
    if (!any) return std::nullopt;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < d.utterances.size(); ++i) {
      const auto& u = d.utterances[i];
      if (agents_only && u.role != Role::agent) continue;
      auto v = u.rewards ? u.rewards->get(m) : std::nullopt;
      if (!v) {
        throw Error(ErrorKind::missing_rewards,
                    "utterance " + std::to_string(i) + " lacks " + std::string(metric_name(m)));
      }
      sum += *v;
      ++count;
    }
    return sum / static_cast<double>(count);
  };

  DialogueAggregate agg;
  agg.agent_means.k_prec = mean_over(Metric::k_prec, true);
  agg.agent_means.q2_f1 = mean_over(Metric::q2_f1, true);
  agg.agent_means.q2_nli = mean_over(Metric::q2_nli, true);
  agg.specificity_mean = mean_over(Metric::specificity, false);
  return agg;
}

}  // namespace forge::metrics
