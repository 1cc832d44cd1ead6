#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "forge/dialogue.hpp"
#include "forge/reward.hpp"

namespace forge::metrics {

// Tokens are maximal runs of alphanumeric characters. Bytes >= 0x80 count as
// alphanumeric so UTF-8 letters stay inside their word.
struct TokenizerConfig {
  bool lowercase = true;
  bool drop_stopwords = false;
  std::optional<std::set<std::string>> stopwords;

  void validate() const;
};

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg = {});

/// Token set of a knowledge text, built once and reused across utterances.
class KnowledgeIndex {
 public:
  explicit KnowledgeIndex(std::string_view knowledge, TokenizerConfig cfg = {});

  /// Fraction of the utterance's tokens (counted per occurrence) that occur
  /// anywhere in the knowledge. Throws Error(invalid_argument) when the
  /// utterance has no tokens.
  double precision(std::string_view utterance) const;

  bool contains(const std::string& token) const { return tokens_.count(token) != 0; }

 private:
  TokenizerConfig cfg_;
  std::unordered_set<std::string> tokens_;
};

double k_precision(std::string_view utterance, std::string_view knowledge, const TokenizerConfig& cfg = {});

// --- Specificity proxy ------------------------------------------------------
//
// score = logistic(bias + w_num*numeral + w_long*long_token
//                  + w_cap*capitalized + w_len*length)
//
// numeral      fraction of tokens made only of digits
// long_token   fraction of tokens with >= 8 characters
// capitalized  fraction of tokens starting with an uppercase letter that do
//              not open a sentence
// length       min(token_count / 40, 1)
//
// All weights are positive, so the score is non-decreasing in each feature.

struct SpecificityFeatures {
  double numeral = 0.0;
  double long_token = 0.0;
  double capitalized = 0.0;
  double length = 0.0;
};

struct SpecificityWeights {
  double bias = -1.5;
  double numeral = 3.0;
  double long_token = 3.0;
  double capitalized = 2.0;
  double length = 2.5;
};

inline constexpr std::size_t kLongTokenChars = 8;
inline constexpr double kLengthNormalizer = 40.0;

/// Throws Error(invalid_argument) when the utterance has no tokens.
SpecificityFeatures specificity_features(std::string_view utterance);
double specificity_from_features(const SpecificityFeatures& f, const SpecificityWeights& w = {});
double specificity(std::string_view utterance, const SpecificityWeights& w = {});

// --- Diversity ----------------------------------------------------------------

/// Unique n-grams across utterances; n-grams never span two utterances.
std::size_t distinct_ngrams(const std::vector<std::string>& utterances, int n, const TokenizerConfig& cfg = {});
/// Total n-gram occurrences across utterances (same windowing as above).
std::size_t total_ngrams(const std::vector<std::string>& utterances, int n, const TokenizerConfig& cfg = {});

// --- BLEU ---------------------------------------------------------------------

inline constexpr int kBleuOrder = 4;

struct BleuStats {
  std::size_t matches[kBleuOrder] = {};
  std::size_t totals[kBleuOrder] = {};
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

BleuStats bleu_stats(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                     const TokenizerConfig& cfg = {});

/// Corpus BLEU-4 on a 0-100 scale. Orders with zero matches use
/// (matches + 1) / (total + 1); brevity penalty exp(1 - r/c) when c < r.
double bleu_from_stats(const BleuStats& stats);
double corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                   const TokenizerConfig& cfg = {});

// --- Dialogue aggregation -------------------------------------------------------

struct DialogueAggregate {
  RewardVector agent_means;                 // k_prec / q2 over agent turns; specificity unset
  std::optional<double> specificity_mean;   // over every utterance
};

/// A metric is aggregated when any contributing utterance carries it; it must
/// then be present on all of them, otherwise Error(missing_rewards) names the
/// first utterance index lacking it.
DialogueAggregate aggregate_dialogue(const Dialogue& d);

}  // namespace forge::metrics
